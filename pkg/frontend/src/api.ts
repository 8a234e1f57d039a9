/** Thin fetch wrappers over the triage service. Every mutation returns
 * the parsed body or throws ApiError carrying the HTTP status. */
import type {
  ApiEvent,
  EntryCard,
  RetrainReport,
  SampleDetail,
  StatusPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function parse<T>(response: Response): Promise<T> {
  const text = await response.text();
  let body: unknown = null;
  try {
    body = text ? JSON.parse(text) : null;
  } catch {
    body = { message: text };
  }
  if (!response.ok) {
    const msg = (body as { message?: string; detail?: string } | null) ?? {};
    throw new ApiError(response.status, msg.message ?? msg.detail ?? response.statusText);
  }
  return body as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  private url(path: string): string {
    return this.base + path;
  }

  private post(path: string, body?: unknown): Promise<Response> {
    return fetch(this.url(path), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? "{}" : JSON.stringify(body),
    });
  }

  async status(): Promise<StatusPayload> {
    return parse(await fetch(this.url("/status")));
  }

  async queue(status = "pending"): Promise<EntryCard[]> {
    return parse(await fetch(this.url(`/queue?status=${encodeURIComponent(status)}`)));
  }

  async sample(id: string): Promise<SampleDetail> {
    return parse(await fetch(this.url(`/sample/${encodeURIComponent(id)}`)));
  }

  async events(since: number): Promise<{ events: ApiEvent[] }> {
    return parse(await fetch(this.url(`/events?since=${since}`)));
  }

  async label(id: string, classId: number): Promise<{ id: string; class_id: number }> {
    return parse(await this.post("/label", { id, class_id: classId, operator: "ui" }));
  }

  async addClass(name: string): Promise<{ id: number; name: string }> {
    return parse(await this.post("/class", { name }));
  }

  async approveProposal(proposalId: string, classId: number): Promise<{ class_id: number }> {
    return parse(await this.post(
      `/proposal/${encodeURIComponent(proposalId)}/approve`, { class_id: classId }));
  }

  async rejectProposal(proposalId: string): Promise<{ status: string }> {
    return parse(await this.post(`/proposal/${encodeURIComponent(proposalId)}/reject`));
  }

  async retrain(): Promise<{ report: RetrainReport }> {
    return parse(await this.post("/retrain"));
  }
}
