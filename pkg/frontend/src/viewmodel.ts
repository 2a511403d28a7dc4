// Pure view logic for the review queue.
//
// The service owns queue ordering (worst predicted quality first); the
// view model never reorders, it only annotates rows for display.

import { MetricsDto, QueueItemDto } from './types';

export interface QueueRow {
  itemId: string;
  imageId: string;
  status: string;
  predictedDice: number | null;
  predictedDiceDisplay: string;
  trueDice: number | null;
  dominantUncertainClass: string | null;
  entropyOverlayPath: string;
  segmentationOverlayPath: string;
  sourceImagePath: string;
}

export interface ModelSummary {
  version: number;
  rSquared: number | null;
  includedPredictors: string[];
}

export interface QueueViewModel {
  rows: QueueRow[];
  model: ModelSummary | null;
  threshold: number | null;
}

export interface WhatIfSummary {
  threshold: number;
  below: number;
  above: number;
  unscored: number;
  projectedHumanShare: number; // fraction of scored pending items forwarded
}

export interface LegendSpec {
  minValue: number;
  maxValue: number;
  minLabel: string;
  maxLabel: string;
}

export function clamp01(x: number): number {
  return Math.min(1, Math.max(0, x));
}

/** Display form of a predicted mean Dice: clamped to [0,1], 3 decimals. */
export function formatPredicted(value: number | null): string {
  if (value === null) return 'unscored';
  return clamp01(value).toFixed(3);
}

/**
 * The predicted class region with the highest mean entropy: the first
 * thing the reviewer should look at. Absent classes are skipped.
 */
export function dominantUncertainClass(
  uncertainties: (number | null)[],
  classNames: string[],
): string | null {
  let best: number | null = null;
  let bestIdx = -1;
  uncertainties.forEach((u, i) => {
    if (u !== null && (best === null || u > best)) {
      best = u;
      bestIdx = i;
    }
  });
  return bestIdx >= 0 ? classNames[bestIdx] : null;
}

/**
 * Rows in exactly the order the service returned them. Order authority
 * is the service; the UI must not sort.
 */
export function buildQueueViewModel(
  items: QueueItemDto[],
  model: ModelSummary | null,
  threshold: number | null = null,
): QueueViewModel {
  const rows = items.map((item) => ({
    itemId: item.item_id,
    imageId: item.image_id,
    status: item.status,
    predictedDice: item.predicted_mean_dice,
    predictedDiceDisplay: formatPredicted(item.predicted_mean_dice),
    trueDice: item.true_mean_dice,
    dominantUncertainClass: dominantUncertainClass(
      item.class_uncertainties,
      item.class_names,
    ),
    entropyOverlayPath: `/v1/items/${item.item_id}/overlay.png?kind=entropy`,
    segmentationOverlayPath: `/v1/items/${item.item_id}/overlay.png?kind=segmentation`,
    sourceImagePath: `/v1/items/${item.item_id}/source.png`,
  }));
  return { rows, model, threshold };
}

/** Optimistic removal after a decision; order of the rest is untouched. */
export function removeItem(vm: QueueViewModel, itemId: string): QueueViewModel {
  return { ...vm, rows: vm.rows.filter((r) => r.itemId !== itemId) };
}

/**
 * Client-side what-if: how many pending items fall below a predicted-Dice
 * cutoff, i.e. the human workload if the expert reviewed everything the
 * model distrusts. Pure decision support; mutates nothing.
 */
export function whatIfThreshold(
  items: QueueItemDto[],
  threshold: number,
): WhatIfSummary {
  let below = 0;
  let above = 0;
  let unscored = 0;
  for (const item of items) {
    if (item.status !== 'pending') continue;
    const p = item.predicted_mean_dice;
    if (p === null) unscored += 1;
    else if (p < threshold) below += 1;
    else above += 1;
  }
  const scored = below + above;
  return {
    threshold,
    below,
    above,
    unscored,
    projectedHumanShare: scored === 0 ? 0 : below / scored,
  };
}

/**
 * Entropy legend endpoints: 0 (one class certain) to ln C (all classes
 * equally likely), matching the service's grayscale scaling of
 * 255 / ln C.
 */
export function entropyLegend(numClasses: number): LegendSpec {
  if (numClasses < 2) throw new Error('numClasses must be >= 2');
  const max = Math.log(numClasses);
  return {
    minValue: 0,
    maxValue: max,
    minLabel: '0',
    maxLabel: `ln ${numClasses} = ${max.toFixed(3)}`,
  };
}

/** pending + accepted + annotated must always equal total. */
export function metricsConsistent(metrics: MetricsDto): boolean {
  const s = metrics.by_status;
  return s.pending + s.accepted + s.annotated === metrics.total;
}
