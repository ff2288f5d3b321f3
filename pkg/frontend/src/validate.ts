// Pre-submit keyword validation against the model's vocabulary.

import { KeywordGroup } from "./types.js";

export interface ValidationIssue {
  group: number;
  keyword: string;
  reason: "unknown-word" | "empty-group" | "duplicate-in-group";
}

export function validateGroups(
  groups: KeywordGroup[],
  vocab: Set<string>,
): ValidationIssue[] {
  const issues: ValidationIssue[] = [];
  groups.forEach((g, gi) => {
    if (g.keywords.length === 0) {
      issues.push({ group: gi, keyword: "", reason: "empty-group" });
      return;
    }
    const seen = new Set<string>();
    for (const word of g.keywords) {
      if (!vocab.has(word)) {
        issues.push({ group: gi, keyword: word, reason: "unknown-word" });
      }
      if (seen.has(word)) {
        issues.push({ group: gi, keyword: word, reason: "duplicate-in-group" });
      }
      seen.add(word);
    }
  });
  return issues;
}

export function parseKeywordInput(text: string): string[] {
  return text
    .split(/[\s,;]+/)
    .map((w) => w.trim().toLowerCase())
    .filter((w) => w.length > 0);
}
