// Thin client for the tools API. One in-flight request per group: firing
// a new cover while the old one is still running aborts the old one, and a
// reply that lost the race is reported as superseded rather than applied.

import type {
  CellCollection,
  CoverResponse,
  QuerysetResponse,
  ZoneResponse,
} from "./types.js";

export type Group = "cover" | "queryset" | "zonefile";

export type ApiResult<T> =
  | { ok: true; doc: T }
  | { ok: false; superseded: boolean; error: string };

function checkCollection(v: unknown): CellCollection {
  const c = v as CellCollection;
  if (c?.type !== "FeatureCollection" || !Array.isArray(c.features)) {
    throw new Error("response geojson is not a FeatureCollection");
  }
  for (const f of c.features) {
    if (typeof f?.properties?.token !== "string"
        || f?.geometry?.type !== "Polygon") {
      throw new Error("response feature is not a cell polygon");
    }
  }
  return c;
}

function checkStrings(v: unknown, what: string): string[] {
  if (!Array.isArray(v) || v.some((s) => typeof s !== "string")) {
    throw new Error(`response ${what} is not a list of strings`);
  }
  return v as string[];
}

export class ToolsClient {
  private inflight = new Map<Group, AbortController>();

  constructor(readonly baseUrl: string) {}

  private async post(group: Group, path: string, body: unknown):
      Promise<ApiResult<unknown>> {
    this.inflight.get(group)?.abort();
    const ctl = new AbortController();
    this.inflight.set(group, ctl);
    try {
      const resp = await fetch(this.baseUrl + path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
        signal: ctl.signal,
      });
      const text = await resp.text();
      if (this.inflight.get(group) !== ctl) {
        return { ok: false, superseded: true, error: "" };
      }
      if (!resp.ok) {
        let message = `${path} failed: HTTP ${resp.status}`;
        try {
          const detail = JSON.parse(text);
          if (typeof detail?.error === "string") message = detail.error;
        } catch {
          // non-JSON error body, keep the status line
        }
        return { ok: false, superseded: false, error: message };
      }
      return { ok: true, doc: JSON.parse(text) };
    } catch (err) {
      if (ctl.signal.aborted) return { ok: false, superseded: true, error: "" };
      return { ok: false, superseded: false, error: `${path} failed: ${err}` };
    } finally {
      if (this.inflight.get(group) === ctl) this.inflight.delete(group);
    }
  }

  private async parsed<T>(group: Group, path: string, body: unknown,
                          check: (doc: unknown) => T): Promise<ApiResult<T>> {
    const result = await this.post(group, path, body);
    if (!result.ok) return result;
    try {
      return { ok: true, doc: check(result.doc) };
    } catch (err) {
      return { ok: false, superseded: false, error: String(err) };
    }
  }

  cover(body: unknown): Promise<ApiResult<CoverResponse>> {
    return this.parsed("cover", "/cover", body, (doc) => {
      const d = doc as CoverResponse;
      return {
        tokens: checkStrings(d?.tokens, "tokens"),
        geojson: checkCollection(d?.geojson),
      };
    });
  }

  queryset(body: unknown): Promise<ApiResult<QuerysetResponse>> {
    return this.parsed("queryset", "/queryset", body, (doc) => {
      const d = doc as QuerysetResponse;
      return {
        names: checkStrings(d?.names, "names"),
        geojson: checkCollection(d?.geojson),
      };
    });
  }

  zonefile(body: unknown): Promise<ApiResult<ZoneResponse>> {
    return this.parsed("zonefile", "/zonefile", body, (doc) => {
      const d = doc as ZoneResponse;
      if (typeof d?.zone !== "string") {
        throw new Error("response zone is not a string");
      }
      return { zone: d.zone };
    });
  }
}
