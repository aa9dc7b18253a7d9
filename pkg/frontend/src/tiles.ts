// Base map: slippy tiles from a configurable template, or a plain
// graticule when none is set so everything works offline.

import { project, type Shape, type View } from "./overlay.js";

const TILE_PX = 256;
const WEB_MERCATOR_LIMIT = 85.05112878;

export interface TileSpec {
  url: string;
  px: number;
  py: number;
  sizePx: number;
}

function fill(template: string, z: number, x: number, y: number): string {
  return template
    .replace("{z}", String(z))
    .replace("{x}", String(x))
    .replace("{y}", String(y));
}

// Pick the zoom whose native resolution at the view center is closest to
// the view's, then place each covering tile by projecting its NW corner.
export function tilesFor(template: string, v: View): TileSpec[] {
  if (template === "") return [];
  const rad = Math.PI / 180;
  const groundAtZ0 = (2 * Math.PI * 6378137 * Math.cos(v.centerLat * rad)) / TILE_PX;
  let z = Math.round(Math.log2(groundAtZ0 / v.metersPerPx));
  z = Math.max(0, Math.min(19, z));
  const n = 2 ** z;

  const toTile = (lat: number, lng: number): [number, number] => {
    const clamped = Math.max(-WEB_MERCATOR_LIMIT, Math.min(WEB_MERCATOR_LIMIT, lat));
    const x = ((lng + 180) / 360) * n;
    const latRad = clamped * rad;
    const y = ((1 - Math.asinh(Math.tan(latRad)) / Math.PI) / 2) * n;
    return [x, y];
  };
  const fromTile = (x: number, y: number): [number, number] => {
    const lng = (x / n) * 360 - 180;
    const lat = Math.atan(Math.sinh(Math.PI * (1 - (2 * y) / n))) / rad;
    return [lat, lng];
  };

  const corners: [number, number][] = [
    [0, 0], [v.widthPx, 0], [0, v.heightPx], [v.widthPx, v.heightPx],
  ];
  let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
  for (const [px, py] of corners) {
    const dLat = ((v.heightPx / 2 - py) * v.metersPerPx) / (6371000 * rad);
    const dLng = ((px - v.widthPx / 2) * v.metersPerPx)
        / (6371000 * rad * Math.cos(v.centerLat * rad));
    const [tx, ty] = toTile(v.centerLat + dLat, v.centerLng + dLng);
    minX = Math.min(minX, tx); maxX = Math.max(maxX, tx);
    minY = Math.min(minY, ty); maxY = Math.max(maxY, ty);
  }

  const tiles: TileSpec[] = [];
  for (let ty = Math.floor(minY); ty <= Math.floor(maxY); ty++) {
    if (ty < 0 || ty >= n) continue;
    for (let tx = Math.floor(minX); tx <= Math.floor(maxX); tx++) {
      const wrapped = ((tx % n) + n) % n;
      const [nwLat, nwLng] = fromTile(tx, ty);
      const [seLat] = fromTile(tx, ty + 1);
      const [px, py] = project(v, nwLat, nwLng);
      const [, pyS] = project(v, seLat, nwLng);
      tiles.push({
        url: fill(template, z, wrapped, ty),
        px,
        py,
        sizePx: pyS - py,
      });
      if (tiles.length >= 64) return tiles; // runaway zoom guard
    }
  }
  return tiles;
}

// Offline fallback: lat/lng lines at a step that gives a handful of lines
// across the view.
export function graticule(v: View): Shape[] {
  const rad = Math.PI / 180;
  const spanLat = (v.heightPx * v.metersPerPx) / (6371000 * rad);
  const steps = [0.0001, 0.00025, 0.0005, 0.001, 0.0025, 0.005, 0.01,
                 0.025, 0.05, 0.1, 0.25, 0.5, 1, 2, 5, 10, 30];
  const step = steps.find((s) => spanLat / s <= 12) ?? 30;

  const spanLng = spanLat / Math.max(Math.cos(v.centerLat * rad), 0.01)
      * (v.widthPx / v.heightPx);
  const lines: Shape[] = [];
  const lat0 = Math.floor((v.centerLat - spanLat) / step) * step;
  const lng0 = Math.floor((v.centerLng - spanLng) / step) * step;
  for (let lat = lat0; lat <= v.centerLat + spanLat; lat += step) {
    lines.push({
      kind: "line",
      cls: "graticule",
      points: [
        project(v, lat, v.centerLng - spanLng),
        project(v, lat, v.centerLng + spanLng),
      ],
    });
  }
  for (let lng = lng0; lng <= v.centerLng + spanLng; lng += step) {
    lines.push({
      kind: "line",
      cls: "graticule",
      points: [
        project(v, v.centerLat - spanLat, lng),
        project(v, v.centerLat + spanLat, lng),
      ],
    });
  }
  return lines;
}
