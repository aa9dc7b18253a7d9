// Explorer session state and the request bodies it submits.
//
// One object holds everything the user has built up: drawn geometry,
// covering controls, suffix/target, the probe point, and the last response
// of each kind. Mutators touch only their own slice so an adjustment never
// resets work done elsewhere; a failed request leaves the previous result
// on screen next to the error banner.

import type {
  Controls,
  CoverResponse,
  Geometry,
  Probe,
  QuerysetResponse,
  TargetRecord,
} from "./types.js";

export const MAX_LEVEL = 30;

export const DEFAULT_CONTROLS: Controls = {
  // registration defaults: enough cells to hug a venue without flooding
  // the zone, levels spanning city block down to room scale
  maxCells: 16,
  minLevel: 10,
  maxLevel: 17,
  mode: "exterior",
};

export const DEFAULT_SUFFIX = "flame.test";

// Mirrors the server-side CoveringParams checks so bad values are caught
// before a request goes out. Same bounds, same meaning.
export function controlIssues(c: Controls): string[] {
  const issues: string[] = [];
  if (!Number.isInteger(c.maxCells) || c.maxCells < 1) {
    issues.push(`max_cells must be >= 1: ${c.maxCells}`);
  }
  if (!Number.isInteger(c.minLevel) || c.minLevel < 0 || c.minLevel > MAX_LEVEL) {
    issues.push(`min_level out of range: ${c.minLevel}`);
  }
  if (!Number.isInteger(c.maxLevel) || c.maxLevel < 0 || c.maxLevel > MAX_LEVEL) {
    issues.push(`max_level out of range: ${c.maxLevel}`);
  }
  if (issues.length === 0 && c.minLevel > c.maxLevel) {
    issues.push("min_level must not exceed max_level");
  }
  if (c.mode !== "interior" && c.mode !== "exterior") {
    issues.push(`mode must be interior or exterior: ${c.mode}`);
  }
  return issues;
}

export function geometryIssues(g: Geometry | null): string[] {
  if (g === null) return ["draw a cap or polygon first"];
  if (g.kind === "cap") {
    return g.radiusM > 0 ? [] : [`cap radius must be positive: ${g.radiusM}`];
  }
  return g.vertices.length >= 3 ? [] : ["polygon needs at least 3 vertices"];
}

export class ExplorerSession {
  geometry: Geometry | null = null;
  controls: Controls = { ...DEFAULT_CONTROLS };
  suffix: string = DEFAULT_SUFFIX;
  record: TargetRecord = { type: "MCNAME", value: "" };
  ttl = 300;
  probe: Probe | null = null;

  cover: CoverResponse | null = null;
  queryset: QuerysetResponse | null = null;
  zone: string | null = null;
  error: string | null = null;

  onChange: (() => void) | null = null;

  private changed(): void {
    this.onChange?.();
  }

  setGeometry(g: Geometry | null): void {
    this.geometry = g;
    this.changed();
  }

  addVertex(lat: number, lng: number): void {
    if (this.geometry?.kind === "polygon") {
      this.geometry.vertices.push([lat, lng]);
    } else {
      this.geometry = { kind: "polygon", vertices: [[lat, lng]] };
    }
    this.changed();
  }

  setControls(c: Controls): void {
    this.controls = { ...c };
    this.changed();
  }

  setSuffix(suffix: string): void {
    this.suffix = suffix;
    this.changed();
  }

  setRecord(r: TargetRecord): void {
    this.record = { ...r };
    this.changed();
  }

  setProbe(p: Probe | null): void {
    this.probe = p === null ? null : { ...p };
    this.changed();
  }

  applyCover(resp: CoverResponse): void {
    this.cover = resp;
    this.zone = null; // cells changed, any previous export is stale
    this.error = null;
    this.changed();
  }

  applyQueryset(resp: QuerysetResponse): void {
    this.queryset = resp;
    this.error = null;
    this.changed();
  }

  applyZone(zone: string): void {
    this.zone = zone;
    this.error = null;
    this.changed();
  }

  applyError(message: string): void {
    // previous overlay and lists stay put; the banner explains the failure
    this.error = message;
    this.changed();
  }

  // Export is gated on having cells on screen and a target to point at; the
  // returned string doubles as the control's hint text.
  exportBlocker(): string | null {
    if (this.cover === null) return "run a covering first";
    if (this.record.value.trim() === "") {
      return this.record.type === "MCNAME"
        ? "set the map server URL to export"
        : "set the nameserver host to export";
    }
    return null;
  }
}

// --- request builders -----------------------------------------------------
// Bodies match the tools API exactly; building them here keeps every
// request the UI can make in one reviewable place.

function regionFields(g: Geometry): Record<string, unknown> {
  if (g.kind === "cap") {
    return { cap: { lat: g.lat, lng: g.lng, radius_m: g.radiusM } };
  }
  const ring = g.vertices.map(([lat, lng]) => [lng, lat]);
  if (ring.length > 0) ring.push(ring[0]!);
  return { region: { type: "Polygon", coordinates: [ring] } };
}

function paramsField(c: Controls): Record<string, unknown> {
  return {
    params: {
      max_cells: c.maxCells,
      min_level: c.minLevel,
      max_level: c.maxLevel,
      mode: c.mode,
    },
  };
}

export function coverBody(s: ExplorerSession): Record<string, unknown> {
  if (s.geometry === null) throw new Error("no geometry");
  return { ...regionFields(s.geometry), ...paramsField(s.controls) };
}

export function zonefileBody(s: ExplorerSession): Record<string, unknown> {
  if (s.geometry === null) throw new Error("no geometry");
  return {
    ...regionFields(s.geometry),
    ...paramsField(s.controls),
    record: { type: s.record.type, value: s.record.value },
    suffix: s.suffix,
    ttl: s.ttl,
  };
}

export function querysetBody(s: ExplorerSession): Record<string, unknown> {
  if (s.probe === null) throw new Error("no probe");
  return {
    lat: s.probe.lat,
    lng: s.probe.lng,
    radius_m: s.probe.radiusM,
    child_levels: s.probe.childLevels,
    suffix: s.suffix,
  };
}
