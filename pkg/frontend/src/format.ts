/** Pure rendering helpers shared by the views. */

import { DeltaEntry } from "./api.js";

export function formatScore(score: number): string {
  return `${(score * 100).toFixed(1)}%`;
}

export function formatValue(value: number): string {
  if (Number.isInteger(value)) {
    return String(value);
  }
  return value.toFixed(Math.abs(value) >= 10 ? 1 : 2);
}

export function formatDelta(delta: DeltaEntry): string {
  const sign = delta.change >= 0 ? "+" : "";
  const unit = delta.unit ? ` ${delta.unit}` : "";
  return `${sign}${formatValue(delta.change)}${unit}`;
}

/** Inline SVG sparkline path for a 30-day history series. */
export function sparklinePath(values: (number | null)[], width = 120,
                              height = 24): string {
  const present = values.filter((v): v is number => v !== null);
  if (present.length < 2 || values.length < 2) {
    return "";
  }
  const lo = Math.min(...present);
  const hi = Math.max(...present);
  const span = hi - lo || 1;
  const parts: string[] = [];
  let drawing = false;
  values.forEach((v, i) => {
    if (v === null) {
      drawing = false;
      return;
    }
    const x = (i / (values.length - 1)) * width;
    const y = height - ((v - lo) / span) * (height - 2) - 1;
    parts.push(`${drawing ? "L" : "M"}${x.toFixed(1)},${y.toFixed(1)}`);
    drawing = true;
  });
  return parts.join(" ");
}
