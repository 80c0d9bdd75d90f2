// Session state machine for the rating page.
//
// Pure: step() maps (phase, event) to the next phase plus at most one
// effect for the caller to execute. Every pair_id enters through a
// pair_received event; nothing here invents one. "loading" and
// "submitting" are the in-flight phases, and both ignore further
// choose events until their outcome arrives, so at most one request
// is ever in flight and a double-click submits exactly once.

export type Progress = {
  images: number;
  min_count: number;
  complete_fraction: number;
};

export type PairView = {
  pair_id: string;
  indicator: string;
  question: string;
  left_image_ref: string;
  right_image_ref: string;
  progress: Progress;
};

export const OUTCOMES = ["left", "right", "both", "neither"] as const;
export type Outcome = (typeof OUTCOMES)[number];

export type Phase =
  | { kind: "idle" }
  | { kind: "loading"; notice?: string }
  | { kind: "rating"; pair: PairView; notice?: string }
  | { kind: "submitting"; pair: PairView; outcome: Outcome }
  | { kind: "error"; message: string }
  | { kind: "done"; progress: Progress };

export type Event =
  | { kind: "start" }
  | { kind: "pair_received"; pair: PairView }
  | { kind: "choose"; outcome: Outcome }
  | { kind: "vote_accepted"; progress: Progress }
  | { kind: "vote_rejected"; status: number; message: string }
  | { kind: "request_failed"; message: string }
  | { kind: "retry" };

export type Effect =
  | { kind: "none" }
  | { kind: "fetch_pair" }
  | { kind: "post_vote"; pairId: string; outcome: Outcome };

export type Step = { phase: Phase; effect: Effect };

const none: Effect = { kind: "none" };

export function initial(): Phase {
  return { kind: "idle" };
}

export function step(phase: Phase, event: Event): Step {
  switch (event.kind) {
    case "start":
      return { phase: { kind: "loading" }, effect: { kind: "fetch_pair" } };

    case "pair_received": {
      if (phase.kind !== "loading") return { phase, effect: none };
      if (event.pair.progress.complete_fraction >= 1) {
        return {
          phase: { kind: "done", progress: event.pair.progress },
          effect: none,
        };
      }
      return {
        phase: { kind: "rating", pair: event.pair, notice: phase.notice },
        effect: none,
      };
    }

    case "choose": {
      if (phase.kind !== "rating") return { phase, effect: none };
      return {
        phase: { kind: "submitting", pair: phase.pair, outcome: event.outcome },
        effect: {
          kind: "post_vote",
          pairId: phase.pair.pair_id,
          outcome: event.outcome,
        },
      };
    }

    case "vote_accepted": {
      if (phase.kind !== "submitting") return { phase, effect: none };
      if (event.progress.complete_fraction >= 1) {
        return { phase: { kind: "done", progress: event.progress }, effect: none };
      }
      return { phase: { kind: "loading" }, effect: { kind: "fetch_pair" } };
    }

    case "vote_rejected": {
      // the server refused this pair_id (already voted, expired, ...):
      // surface the message and move on to a fresh pair
      if (phase.kind !== "submitting") return { phase, effect: none };
      return {
        phase: { kind: "loading", notice: event.message },
        effect: { kind: "fetch_pair" },
      };
    }

    case "request_failed": {
      if (phase.kind !== "loading" && phase.kind !== "submitting") {
        return { phase, effect: none };
      }
      return { phase: { kind: "error", message: event.message }, effect: none };
    }

    case "retry": {
      // after a failed vote the outcome is unknown server-side, so retry
      // always fetches a fresh pair; the server's one-vote-per-pair rule
      // makes that safe either way
      if (phase.kind !== "error") return { phase, effect: none };
      return { phase: { kind: "loading" }, effect: { kind: "fetch_pair" } };
    }
  }
}

// Keyboard shortcuts: arrows pick a side, B/N pick both/neither.
export function keyToOutcome(key: string): Outcome | null {
  switch (key) {
    case "ArrowLeft":
      return "left";
    case "ArrowRight":
      return "right";
    case "b":
    case "B":
      return "both";
    case "n":
    case "N":
      return "neither";
    default:
      return null;
  }
}
