// Turns session state into a flat draw list. Pure data in, pure data out:
// no DOM and no geometry synthesis. Every cell polygon in the output is a
// projection of coordinates that arrived in a tools-API response.

import type { ExplorerSession } from "./session.js";
import type { CellCollection, CellFeature, Geometry, Probe } from "./types.js";

const EARTH_RADIUS_M = 6371000;

export interface View {
  centerLat: number;
  centerLng: number;
  metersPerPx: number;
  widthPx: number;
  heightPx: number;
}

export type Shape =
  | { kind: "poly"; cls: string; points: [number, number][]; title?: string }
  | { kind: "line"; cls: string; points: [number, number][] }
  | { kind: "circle"; cls: string; cx: number; cy: number; r: number };

// Local equirectangular projection around the view center; fine at venue
// scale, and only ever used for display.
export function project(v: View, lat: number, lng: number): [number, number] {
  const rad = Math.PI / 180;
  const kLat = EARTH_RADIUS_M * rad;
  const kLng = kLat * Math.cos(v.centerLat * rad);
  let dLng = lng - v.centerLng;
  if (dLng > 180) dLng -= 360;
  if (dLng < -180) dLng += 360;
  return [
    v.widthPx / 2 + (dLng * kLng) / v.metersPerPx,
    v.heightPx / 2 - ((lat - v.centerLat) * kLat) / v.metersPerPx,
  ];
}

export function unproject(v: View, x: number, y: number): [number, number] {
  const rad = Math.PI / 180;
  const kLat = EARTH_RADIUS_M * rad;
  const kLng = kLat * Math.cos(v.centerLat * rad);
  return [
    v.centerLat + ((v.heightPx / 2 - y) * v.metersPerPx) / kLat,
    v.centerLng + ((x - v.widthPx / 2) * v.metersPerPx) / kLng,
  ];
}

// Fit the view to a bag of [lng, lat] positions with some breathing room.
export function fitView(lngLats: [number, number][], widthPx: number,
                        heightPx: number, padFactor = 1.3): View {
  if (lngLats.length === 0) {
    return { centerLat: 0, centerLng: 0, metersPerPx: 40075000 / widthPx,
             widthPx, heightPx };
  }
  let minLat = Infinity, maxLat = -Infinity;
  let minLng = Infinity, maxLng = -Infinity;
  for (const [lng, lat] of lngLats) {
    minLat = Math.min(minLat, lat); maxLat = Math.max(maxLat, lat);
    minLng = Math.min(minLng, lng); maxLng = Math.max(maxLng, lng);
  }
  const centerLat = (minLat + maxLat) / 2;
  const centerLng = (minLng + maxLng) / 2;
  const rad = Math.PI / 180;
  const spanY = (maxLat - minLat) * EARTH_RADIUS_M * rad;
  const spanX = (maxLng - minLng) * EARTH_RADIUS_M * rad
      * Math.cos(centerLat * rad);
  const metersPerPx = Math.max(
    (spanX * padFactor) / widthPx,
    (spanY * padFactor) / heightPx,
    0.01,
  );
  return { centerLat, centerLng, metersPerPx, widthPx, heightPx };
}

export function collectionLngLats(c: CellCollection): [number, number][] {
  const out: [number, number][] = [];
  for (const f of c.features) {
    for (const [lng, lat] of f.geometry.coordinates[0] ?? []) {
      out.push([lng!, lat!]);
    }
  }
  return out;
}

// --- query-set layering ----------------------------------------------------
// Geo-domain names spell the cell path from leaf to face, so ancestry is a
// suffix check on the name. A member that is a proper ancestor of another
// member is a parent domain; the rest are the base covering.

export function ancestorNames(names: string[]): Set<string> {
  const parents = new Set<string>();
  for (const a of names) {
    for (const b of names) {
      if (a !== b && b.endsWith("." + a)) {
        parents.add(a);
        break;
      }
    }
  }
  return parents;
}

// Registered-vs-queried intersection is exact token equality: the match a
// nameserver would make on these names.
export function hitTokens(cover: CellCollection | null,
                          queryset: CellCollection): Set<string> {
  if (cover === null) return new Set();
  const registered = new Set(cover.features.map((f) => f.properties.token));
  const hits = new Set<string>();
  for (const f of queryset.features) {
    if (registered.has(f.properties.token)) hits.add(f.properties.token);
  }
  return hits;
}

function cellShape(v: View, f: CellFeature, cls: string): Shape {
  const ring = f.geometry.coordinates[0] ?? [];
  return {
    kind: "poly",
    cls,
    points: ring.map(([lng, lat]) => project(v, lat!, lng!)),
    title: `${f.properties.token} (level ${f.properties.level})`,
  };
}

function geometryShapes(v: View, g: Geometry): Shape[] {
  if (g.kind === "cap") {
    const [cx, cy] = project(v, g.lat, g.lng);
    return [
      { kind: "circle", cls: "drawn", cx, cy, r: g.radiusM / v.metersPerPx },
      { kind: "circle", cls: "drawn-center", cx, cy, r: 3 },
    ];
  }
  const pts = g.vertices.map(([lat, lng]) => project(v, lat, lng));
  if (pts.length >= 3) {
    return [{ kind: "poly", cls: "drawn", points: pts }];
  }
  return [{ kind: "line", cls: "drawn", points: pts }];
}

function probeShapes(v: View, p: Probe): Shape[] {
  const [cx, cy] = project(v, p.lat, p.lng);
  return [
    { kind: "circle", cls: "probe", cx, cy, r: p.radiusM / v.metersPerPx },
    { kind: "circle", cls: "probe-center", cx, cy, r: 3 },
  ];
}

// Bottom to top: covering cells, parent domains, base query cells,
// intersection highlights, drawn geometry, probe. Later shapes paint over
// earlier ones, so the hits stay visible.
export function buildOverlay(s: ExplorerSession, v: View): Shape[] {
  const shapes: Shape[] = [];
  if (s.cover !== null) {
    for (const f of s.cover.geojson.features) {
      shapes.push(cellShape(v, f, "cell"));
    }
  }
  if (s.queryset !== null) {
    const parents = ancestorNames(s.queryset.names);
    const hits = hitTokens(s.cover?.geojson ?? null, s.queryset.geojson);
    const layered: [CellFeature, string][] = [];
    s.queryset.geojson.features.forEach((f, i) => {
      const name = s.queryset!.names[i] ?? "";
      layered.push([f, parents.has(name) ? "query-parent" : "query-base"]);
    });
    // parents first so base cells draw over their ancestors
    layered.sort((a, b) => Number(a[1] === "query-base") - Number(b[1] === "query-base"));
    for (const [f, cls] of layered) shapes.push(cellShape(v, f, cls));
    for (const f of s.queryset.geojson.features) {
      if (hits.has(f.properties.token)) shapes.push(cellShape(v, f, "hit"));
    }
  }
  if (s.geometry !== null) shapes.push(...geometryShapes(v, s.geometry));
  if (s.probe !== null) shapes.push(...probeShapes(v, s.probe));
  return shapes;
}
