// HTTP client for the rating service. Network failures raise
// NetworkError; HTTP-level rejections raise ApiError carrying the
// status and the server's error message, so callers can tell a dead
// server apart from a refused request.

import type { Outcome, PairView, Progress } from "./state.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

export type VoteReply = { accepted: boolean; progress: Progress };

export type IndicatorScore = { mu: number; sigma: number; count: number };

export type ScoresReply = {
  composite: Record<string, number>;
  incomplete: string[];
  ratings: Record<string, Record<string, IndicatorScore>>;
};

async function request(
  base: string,
  path: string,
  init?: RequestInit,
): Promise<unknown> {
  let response: Response;
  try {
    response = await fetch(base + path, init);
  } catch (cause) {
    throw new NetworkError(`cannot reach server: ${String(cause)}`);
  }
  let body: unknown = null;
  try {
    body = await response.json();
  } catch {
    // non-JSON body; fall back to the status text below
  }
  if (!response.ok) {
    const detail =
      body !== null && typeof body === "object" && "error" in body
        ? String((body as { error: unknown }).error)
        : `${response.status} ${response.statusText}`;
    throw new ApiError(response.status, detail);
  }
  return body;
}

export async function fetchPair(
  base = "",
  indicator?: string,
): Promise<PairView> {
  const query = indicator ? `?indicator=${encodeURIComponent(indicator)}` : "";
  return (await request(base, `/api/pair${query}`)) as PairView;
}

export async function submitVote(
  base: string,
  pairId: string,
  outcome: Outcome,
): Promise<VoteReply> {
  return (await request(base, "/api/vote", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ pair_id: pairId, outcome }),
  })) as VoteReply;
}

export async function fetchProgress(base = ""): Promise<Progress> {
  return (await request(base, "/api/progress")) as Progress;
}

export async function fetchScores(base = ""): Promise<ScoresReply> {
  return (await request(base, "/api/scores")) as ScoresReply;
}
