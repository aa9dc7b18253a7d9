// Wire types shared with the tools API (POST /cover, /zonefile, /queryset).
// The UI never computes cells itself: everything drawn comes out of these
// response shapes.

export type CoveringMode = "interior" | "exterior";

export interface Controls {
  maxCells: number;
  minLevel: number;
  maxLevel: number;
  mode: CoveringMode;
}

// Vertices are [lat, lng] in drawing order; the request builder closes the
// ring and flips to GeoJSON [lng, lat].
export type Geometry =
  | { kind: "cap"; lat: number; lng: number; radiusM: number }
  | { kind: "polygon"; vertices: [number, number][] };

export interface TargetRecord {
  type: "MCNAME" | "MNS";
  value: string;
}

export interface Probe {
  lat: number;
  lng: number;
  radiusM: number;
  childLevels: number;
}

export interface CellFeature {
  type: "Feature";
  properties: { token: string; level: number };
  geometry: { type: "Polygon"; coordinates: number[][][] };
}

export interface CellCollection {
  type: "FeatureCollection";
  features: CellFeature[];
}

export interface CoverResponse {
  tokens: string[];
  geojson: CellCollection;
}

export interface QuerysetResponse {
  names: string[];
  geojson: CellCollection;
}

export interface ZoneResponse {
  zone: string;
}
