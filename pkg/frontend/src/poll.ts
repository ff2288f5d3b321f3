// Job polling: 1s base interval with exponential backoff (fine-tunes at
// desk scale finish in seconds, so the fast path matters most).

import { ApiClient } from "./api.js";
import { JobRecord } from "./types.js";

export interface PollOptions {
  baseMs?: number;
  maxMs?: number;
  backoff?: number;
  onTick?: (job: JobRecord) => void;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export async function pollJob(
  api: ApiClient,
  jobId: string,
  opts: PollOptions = {},
): Promise<JobRecord> {
  const base = opts.baseMs ?? 1000;
  const max = opts.maxMs ?? 8000;
  const backoff = opts.backoff ?? 1.5;
  const sleep = opts.sleep ?? defaultSleep;
  let interval = base;
  for (;;) {
    const job = await api.getJob(jobId);
    opts.onTick?.(job);
    if (job.state === "done" || job.state === "failed" || job.state === "cancelled") {
      return job;
    }
    await sleep(interval);
    interval = Math.min(max, interval * backoff);
  }
}
