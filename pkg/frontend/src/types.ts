// Payload shapes of the HTTP API (schema_version 1).

export interface TopicWord {
  word: string;
  prob: number;
}

export interface TopicCard {
  topic: number;
  words: TopicWord[];
  matched_group: string | null;
  shared_words: string[];
}

export interface KeywordGroup {
  name: string;
  keywords: string[];
}

export interface TopicsResponse {
  schema_version: number;
  model_id: string;
  topics: TopicCard[];
  matching: number[] | null;
  keywords: KeywordGroup[] | null;
}

export interface JobRecord {
  id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed" | "cancelled";
  progress: number;
  result: Record<string, unknown> | null;
  error: string | null;
  model_id: string | null;
}

export interface MetricsResponse {
  schema_version: number;
  model_id: string;
  metrics: Record<string, number>;
}

export interface DocumentHit {
  id: string;
  score: number;
  text: string;
  label: number | null;
}

export interface DocumentsResponse {
  schema_version: number;
  model_id: string;
  topic: number;
  documents: DocumentHit[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}
