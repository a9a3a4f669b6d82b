/** What-if state machine: debounce, sequencing, and slider quantization.
 *
 * Kept free of DOM access so it can be tested with fake timers and a stub
 * client. The displayed score must always correspond to the newest
 * acknowledged request: each request gets a monotone sequence number and a
 * response is applied only if its number exceeds the newest one applied so
 * far, so a slow early response can never overwrite a later one. An
 * in-flight request is superseded, not awaited, when the user keeps moving.
 */

import { ApiError, FeatureRow, Overrides, WhatIfResponse } from "./api.js";

export const DEBOUNCE_MS = 250;

/** Clamp a raw slider value to baseline + k*min_change within bounds.
 *
 * Features without a min_change pass through (bounds still apply).
 */
export function quantizeOverride(feature: FeatureRow, raw: number): number {
  const lo = feature.lower_bound;
  const hi = feature.upper_bound;
  let value = raw;
  if (feature.min_change !== null && feature.min_change > 0) {
    const step = feature.min_change;
    let k = Math.round((raw - feature.value) / step);
    // shrink k toward zero until the grid point fits the bounds; k=0 is
    // the baseline itself, which is always in bounds
    while (k !== 0 && (feature.value + k * step < lo ||
                       feature.value + k * step > hi)) {
      k -= Math.sign(k);
    }
    value = feature.value + k * step;
  }
  return Math.min(hi, Math.max(lo, value));
}

export interface WhatIfView {
  score: number | null;
  cls: string | null;
  pending: boolean;
  error: string | null;
}

type WhatIfFn = (cowId: string, overrides: Overrides) => Promise<WhatIfResponse>;
type Scheduler = (fn: () => void, ms: number) => unknown;
type Canceller = (handle: unknown) => void;

export class WhatIfController {
  private overrides: Overrides = {};
  private nextSeq = 0;
  private shownSeq = -1;
  private sentSeq = -1;
  private timer: unknown = null;
  private view: WhatIfView;

  constructor(
    private cowId: string,
    baselineScore: number,
    baselineClass: string,
    private whatIf: WhatIfFn,
    private onChange: (view: WhatIfView) => void,
    private schedule: Scheduler = (fn, ms) => setTimeout(fn, ms),
    private cancel: Canceller = (h) => clearTimeout(h as number),
  ) {
    this.view = {
      score: baselineScore,
      cls: baselineClass,
      pending: false,
      error: null,
    };
    this.onChange(this.view);
  }

  /** Record a slider position; the request fires after the debounce window. */
  setOverride(name: string, value: number): void {
    this.overrides = { ...this.overrides, [name]: { value } };
    this.bump();
  }

  clearOverride(name: string): void {
    const { [name]: _dropped, ...rest } = this.overrides;
    this.overrides = rest;
    this.bump();
  }

  currentOverrides(): Overrides {
    return { ...this.overrides };
  }

  private bump(): void {
    if (this.timer !== null) {
      this.cancel(this.timer);
    }
    this.emit({ ...this.view, pending: true });
    this.timer = this.schedule(() => {
      this.timer = null;
      this.fire();
    }, DEBOUNCE_MS);
  }

  private fire(): void {
    const seq = this.nextSeq++;
    this.sentSeq = seq;
    this.whatIf(this.cowId, this.overrides).then(
      (resp) => this.settle(seq, resp, null),
      (err) => this.settle(seq, null, err),
    );
  }

  private settle(seq: number, resp: WhatIfResponse | null,
                 err: unknown): void {
    if (seq <= this.shownSeq) {
      return; // superseded by a newer acknowledged response
    }
    this.shownSeq = seq;
    const pending = this.timer !== null || this.sentSeq > seq;
    if (resp !== null) {
      this.emit({ score: resp.score, cls: resp.class, pending, error: null });
    } else {
      const message = err instanceof ApiError
        ? `${err.body.code}: ${err.body.message}`
        : String(err);
      this.emit({ ...this.view, pending, error: message });
    }
  }

  private emit(view: WhatIfView): void {
    this.view = view;
    this.onChange(view);
  }
}
