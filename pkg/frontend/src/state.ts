// Workspace state: everything view-facing is derived from API responses,
// except the keyword editor, which holds local edits that a background
// refresh must never clobber.

import { JobRecord, KeywordGroup, TopicCard } from "./types.js";

export interface Banner {
  kind: "idle" | "running" | "done" | "error";
  text: string;
  progress: number;
}

export interface Workspace {
  modelId: string;
  topics: TopicCard[];
  matching: number[] | null;
  metrics: Record<string, number>;
  editor: KeywordGroup[];
  editorDirty: boolean;
  savedKeywords: KeywordGroup[];
  banner: Banner;
  vocab: Set<string>;
}

export function initialWorkspace(modelId: string): Workspace {
  return {
    modelId,
    topics: [],
    matching: null,
    metrics: {},
    editor: [],
    editorDirty: false,
    savedKeywords: [],
    banner: { kind: "idle", text: "", progress: 0 },
    vocab: new Set(),
  };
}

export function applyTopics(
  ws: Workspace,
  topics: TopicCard[],
  matching: number[] | null,
  keywords: KeywordGroup[] | null,
): Workspace {
  const saved = keywords ?? ws.savedKeywords;
  return {
    ...ws,
    topics,
    matching,
    savedKeywords: saved,
    // unsaved edits survive refreshes; otherwise mirror the server state
    editor: ws.editorDirty ? ws.editor : cloneGroups(saved),
    editorDirty: ws.editorDirty,
  };
}

export function applyMetrics(ws: Workspace, metrics: Record<string, number>): Workspace {
  return { ...ws, metrics };
}

export function editKeyword(
  ws: Workspace,
  group: number,
  keywords: string[],
): Workspace {
  const editor = cloneGroups(ws.editor);
  editor[group] = { ...editor[group], keywords: [...keywords] };
  return { ...ws, editor, editorDirty: !groupsEqual(editor, ws.savedKeywords) };
}

export function markSaved(ws: Workspace): Workspace {
  return {
    ...ws,
    savedKeywords: cloneGroups(ws.editor),
    editorDirty: false,
  };
}

export function setBanner(ws: Workspace, banner: Banner): Workspace {
  return { ...ws, banner };
}

export function bannerForJob(job: JobRecord): Banner {
  switch (job.state) {
    case "done":
      return { kind: "done", text: "fine-tune complete", progress: 1 };
    case "failed":
      return { kind: "error", text: job.error ?? "job failed", progress: 0 };
    case "cancelled":
      return { kind: "idle", text: "job cancelled", progress: 0 };
    default:
      return {
        kind: "running",
        text: `${job.kind} ${(job.progress * 100).toFixed(0)}%`,
        progress: job.progress,
      };
  }
}

export function groupsEqual(a: KeywordGroup[], b: KeywordGroup[]): boolean {
  if (a.length !== b.length) return false;
  return a.every(
    (g, i) =>
      g.name === b[i].name &&
      g.keywords.length === b[i].keywords.length &&
      g.keywords.every((w, j) => w === b[i].keywords[j]),
  );
}

export function cloneGroups(groups: KeywordGroup[]): KeywordGroup[] {
  return groups.map((g) => ({ name: g.name, keywords: [...g.keywords] }));
}
