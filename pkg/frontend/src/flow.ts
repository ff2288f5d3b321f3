// The refinement loop: submit edited groups, run the matching stage,
// refresh the board and metrics when the job lands.

import { ApiClient } from "./api.js";
import { pollJob, PollOptions } from "./poll.js";
import {
  applyMetrics,
  applyTopics,
  bannerForJob,
  markSaved,
  setBanner,
  Workspace,
} from "./state.js";
import { ApiError } from "./types.js";
import { validateGroups, ValidationIssue } from "./validate.js";

export interface FlowResult {
  workspace: Workspace;
  issues: ValidationIssue[];
  conflict: boolean;
}

export async function refreshWorkspace(
  api: ApiClient,
  ws: Workspace,
): Promise<Workspace> {
  const topics = await api.getTopics(ws.modelId);
  const metrics = await api.getMetrics(ws.modelId);
  let next = applyTopics(ws, topics.topics, topics.matching, topics.keywords);
  next = applyMetrics(next, metrics.metrics);
  if (next.vocab.size === 0) {
    next = { ...next, vocab: new Set(await api.getVocab(ws.modelId)) };
  }
  return next;
}

export async function submitFinetune(
  api: ApiClient,
  ws: Workspace,
  poll: PollOptions = {},
): Promise<FlowResult> {
  const issues = validateGroups(ws.editor, ws.vocab);
  if (issues.length > 0) {
    return { workspace: ws, issues, conflict: false };
  }
  let next = ws;
  try {
    await api.putKeywords(ws.modelId, ws.editor);
    next = markSaved(next);
    const job = await api.startFinetune(ws.modelId);
    next = setBanner(next, bannerForJob(job));
    const finished = await pollJob(api, job.id, {
      ...poll,
      onTick: (j) => {
        next = setBanner(next, bannerForJob(j));
        poll.onTick?.(j);
      },
    });
    next = setBanner(next, bannerForJob(finished));
    if (finished.state === "done") {
      next = await refreshWorkspace(api, next);
    }
    return { workspace: next, issues: [], conflict: false };
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      next = setBanner(next, {
        kind: "error",
        text: "another job is already running for this model",
        progress: 0,
      });
      return { workspace: next, issues: [], conflict: true };
    }
    throw err;
  }
}
