// Thin typed client over the service; all model math stays server-side.

import {
  ApiError,
  DocumentsResponse,
  JobRecord,
  KeywordGroup,
  MetricsResponse,
  TopicsResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string = "",
    private fetcher: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetcher(this.base + path, init);
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      // non-JSON error bodies map onto a plain status error below
    }
    if (!resp.ok) {
      const detail =
        body && typeof body === "object"
          ? JSON.stringify((body as Record<string, unknown>)["detail"] ?? body)
          : resp.statusText;
      throw new ApiError(resp.status, detail);
    }
    return body as T;
  }

  getTopics(modelId: string): Promise<TopicsResponse> {
    return this.request(`/models/${modelId}/topics`);
  }

  getMetrics(modelId: string): Promise<MetricsResponse> {
    return this.request(`/models/${modelId}/metrics`);
  }

  getVocab(modelId: string): Promise<string[]> {
    return this.request<{ tokens: string[] }>(`/models/${modelId}/vocab`).then(
      (r) => r.tokens,
    );
  }

  getDocuments(modelId: string, topic: number, limit = 8): Promise<DocumentsResponse> {
    return this.request(`/models/${modelId}/documents?topic=${topic}&limit=${limit}`);
  }

  getJob(jobId: string): Promise<JobRecord> {
    return this.request<{ job: JobRecord }>(`/jobs/${jobId}`).then((r) => r.job);
  }

  putKeywords(modelId: string, groups: KeywordGroup[]): Promise<void> {
    return this.request(`/models/${modelId}/keywords`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(groups),
    });
  }

  startFinetune(modelId: string): Promise<JobRecord> {
    return this.request<{ job: JobRecord }>(`/models/${modelId}/finetune`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({}),
    }).then((r) => r.job);
  }
}
