// Page controller: renders the state-machine phase into the DOM and
// turns clicks and keys into events. The only mutable state is the
// current phase; the whole view re-derives from it on every step.

import { ApiError, NetworkError, fetchPair, submitVote } from "./api.js";
import type { Effect, Event, Outcome, Phase } from "./state.js";
import { OUTCOMES, initial, keyToOutcome, step } from "./state.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function fetchFailure(err: unknown): Event {
  const message =
    err instanceof Error ? err.message : `unexpected failure: ${String(err)}`;
  return { kind: "request_failed", message };
}

function voteFailure(err: unknown): Event {
  if (err instanceof ApiError) {
    return { kind: "vote_rejected", status: err.status, message: err.message };
  }
  const message =
    err instanceof NetworkError ? err.message : `vote failed: ${String(err)}`;
  return { kind: "request_failed", message };
}

export class RatingPage {
  private phase: Phase = initial();

  start(): void {
    for (const outcome of OUTCOMES) {
      byId(`vote-${outcome}`).addEventListener("click", () =>
        this.dispatch({ kind: "choose", outcome }),
      );
    }
    byId("retry").addEventListener("click", () =>
      this.dispatch({ kind: "retry" }),
    );
    document.addEventListener("keydown", (ev) => {
      const outcome = keyToOutcome(ev.key);
      if (outcome) this.dispatch({ kind: "choose", outcome });
    });
    this.dispatch({ kind: "start" });
  }

  dispatch(event: Event): void {
    const next = step(this.phase, event);
    this.phase = next.phase;
    this.render();
    this.execute(next.effect);
  }

  private execute(effect: Effect): void {
    if (effect.kind === "fetch_pair") {
      fetchPair().then(
        (pair) => this.dispatch({ kind: "pair_received", pair }),
        (err) => this.dispatch(fetchFailure(err)),
      );
    } else if (effect.kind === "post_vote") {
      submitVote("", effect.pairId, effect.outcome).then(
        (reply) =>
          this.dispatch({ kind: "vote_accepted", progress: reply.progress }),
        (err) => this.dispatch(voteFailure(err)),
      );
    }
  }

  private render(): void {
    const phase = this.phase;
    byId("loading").hidden = phase.kind !== "loading";
    byId("pair-area").hidden =
      phase.kind !== "rating" && phase.kind !== "submitting";
    byId("error-banner").hidden = phase.kind !== "error";
    byId("done-screen").hidden = phase.kind !== "done";

    const notice =
      phase.kind === "loading" || phase.kind === "rating"
        ? phase.notice
        : undefined;
    const noticeEl = byId("notice");
    noticeEl.hidden = !notice;
    noticeEl.textContent = notice ?? "";

    if (phase.kind === "rating" || phase.kind === "submitting") {
      const pair = phase.pair;
      byId("indicator").textContent = pair.indicator.replace("_", " ");
      byId("question").textContent = pair.question;
      byId<HTMLImageElement>("left-img").src = pair.left_image_ref;
      byId<HTMLImageElement>("right-img").src = pair.right_image_ref;
      const busy = phase.kind === "submitting";
      for (const outcome of OUTCOMES) {
        byId<HTMLButtonElement>(`vote-${outcome}`).disabled = busy;
      }
      this.renderProgress(pair.progress);
    } else if (phase.kind === "error") {
      byId("error-text").textContent = phase.message;
    } else if (phase.kind === "done") {
      this.renderProgress(phase.progress);
      byId("done-text").textContent =
        `Every one of the ${phase.progress.images} images has enough ` +
        "comparisons. Your ratings are saved.";
    }
  }

  private renderProgress(progress: {
    images: number;
    min_count: number;
    complete_fraction: number;
  }): void {
    const percent = Math.round(progress.complete_fraction * 100);
    byId("progress-bar").style.width = `${percent}%`;
    byId("progress-text").textContent =
      `${percent}% of ${progress.images} images fully compared · ` +
      `fewest comparisons so far: ${progress.min_count}`;
  }
}

new RatingPage().start();
