/** Thin HTTP client for the review service, with an offline retry queue. */

import type { CaseInfo, SessionReport, SlicePayload, SubEdit } from "./types.js";

export type Transport = (
  url: string,
  init?: { method?: string; body?: string; headers?: Record<string, string> },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export interface EditResult {
  ok: boolean;
  status: number;
  version?: number;
  detail?: string;
  queued?: boolean;
}

interface QueuedSubmission {
  sessionId: string;
  edits: SubEdit[];
  version: number;
}

export class ReviewClient {
  private base: string;
  private transport: Transport;
  private token?: string;
  readonly retryQueue: QueuedSubmission[] = [];

  constructor(base: string, transport?: Transport, token?: string) {
    this.base = base.replace(/\/$/, "");
    this.transport =
      transport ??
      (async (url, init) => {
        const res = await fetch(url, init);
        return { status: res.status, json: () => res.json() };
      });
    this.token = token;
  }

  private headers(): Record<string, string> {
    const h: Record<string, string> = { "content-type": "application/json" };
    if (this.token) h["x-auth-token"] = this.token;
    return h;
  }

  private async get<T>(path: string): Promise<T> {
    const res = await this.transport(this.base + path, { headers: this.headers() });
    if (res.status !== 200) throw new Error(`GET ${path} -> ${res.status}`);
    return (await res.json()) as T;
  }

  private async post(path: string, body: unknown) {
    return this.transport(this.base + path, {
      method: "POST",
      body: JSON.stringify(body),
      headers: this.headers(),
    });
  }

  listCases(): Promise<CaseInfo[]> {
    return this.get("/cases");
  }

  getSlice(caseId: string, phase: string, z: number): Promise<SlicePayload> {
    return this.get(`/cases/${caseId}/${phase}/slices/${z}`);
  }

  async createSession(caseId: string, phase: string): Promise<{ session_id: string; version: number }> {
    const res = await this.post("/sessions", { patient_id: caseId, phase });
    if (res.status !== 200) throw new Error(`session creation failed: ${res.status}`);
    return (await res.json()) as { session_id: string; version: number };
  }

  /**
   * Post the pending buffer as one atomic batch.
   *
   * Server rejections (409/422) surface in the result with the buffer left
   * for the caller to retain; network failures park the submission in the
   * retry queue.
   */
  async postEdits(sessionId: string, edits: SubEdit[], version: number): Promise<EditResult> {
    if (edits.length === 0) return { ok: false, status: 0, detail: "empty buffer" };
    try {
      const res = await this.post(`/sessions/${sessionId}/edits`, { edits, version });
      const payload = (await res.json()) as { version?: number; detail?: string };
      if (res.status === 200) {
        return { ok: true, status: 200, version: payload.version };
      }
      return { ok: false, status: res.status, detail: payload.detail };
    } catch {
      this.retryQueue.push({ sessionId, edits, version });
      return { ok: false, status: 0, queued: true, detail: "offline: queued for retry" };
    }
  }

  /** Re-send queued submissions, keeping whatever still fails. */
  async flushQueue(): Promise<number> {
    const pending = this.retryQueue.splice(0);
    let delivered = 0;
    for (const item of pending) {
      const result = await this.postEdits(item.sessionId, item.edits, item.version);
      if (result.ok) delivered++;
      else if (!result.queued) this.retryQueue.push(item);
    }
    return delivered;
  }

  async submitSession(sessionId: string): Promise<SessionReport> {
    const res = await this.post(`/sessions/${sessionId}/submit`, {});
    if (res.status !== 200) throw new Error(`submit failed: ${res.status}`);
    return (await res.json()) as SessionReport;
  }

  getSessionReport(sessionId: string): Promise<SessionReport> {
    return this.get(`/sessions/${sessionId}/report`);
  }

  getSimulatedReport(caseId: string, phase: string): Promise<SessionReport> {
    return this.get(`/cases/${caseId}/${phase}/reports/simulated`);
  }
}
