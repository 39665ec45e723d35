import type { CaseSnapshot, Recommendation, ServiceMeta, WhatIfResult } from './types.js';
import type { EventInput } from './api.js';

/** Steps queued in the what-if builder before they are sent. */
export interface DraftStep {
  activity: string;
  kpi: number;
}

export interface CockpitState {
  caseId: string | null;
  snapshot: CaseSnapshot | null;
  recommendation: Recommendation | null;
  /** Prefix length the recommendation was computed for; stale once they diverge. */
  recommendationBasis: number | null;
  whatIf: WhatIfResult | null;
  draft: DraftStep[];
  meta: ServiceMeta | null;
  k: number;
  /** Last poll failed; the view keeps the previous snapshot but locks inputs. */
  stale: boolean;
  busy: boolean;
  notice: string | null;
}

export const K_CHOICES = [5, 10, 15];

export function initialState(): CockpitState {
  return {
    caseId: null,
    snapshot: null,
    recommendation: null,
    recommendationBasis: null,
    whatIf: null,
    draft: [],
    meta: null,
    k: 10,
    stale: false,
    busy: false,
    notice: null,
  };
}

/** Everything that mutates the case is locked while stale, busy, or terminated. */
export function inputsLocked(state: CockpitState): boolean {
  if (state.caseId === null || state.snapshot === null) return true;
  if (state.stale || state.busy) return true;
  return state.snapshot.status === 'terminated';
}

export function canAccept(state: CockpitState): boolean {
  if (inputsLocked(state)) return false;
  const rec = state.recommendation;
  if (rec === null || rec.action === null) return false;
  // A recommendation computed for an older prefix must not be applied.
  return state.recommendationBasis === (state.snapshot?.events.length ?? -1);
}

/**
 * The event that accepting a recommendation records: the recommended action
 * with the KPI of the first projected step.
 */
export function acceptEvent(rec: Recommendation): EventInput {
  if (rec.action === null || rec.projected_suffix.length === 0) {
    throw new Error('an intervention carries no action to accept');
  }
  return { activity: rec.action, kpi: rec.projected_suffix[0]![1] };
}

/**
 * Fold a fresh server snapshot into the state. The server is the single
 * source of truth: the snapshot always replaces the local copy, and a
 * recommendation fetched for a different prefix is dropped rather than
 * shown against events it never saw.
 */
export function reconcile(state: CockpitState, snapshot: CaseSnapshot): Partial<CockpitState> {
  const patch: Partial<CockpitState> = { snapshot, stale: false };
  if (
    state.recommendation !== null &&
    state.recommendationBasis !== snapshot.events.length
  ) {
    patch.recommendation = null;
    patch.recommendationBasis = null;
  }
  return patch;
}

type Listener = (state: CockpitState) => void;

/** Minimal observable store; every patch notifies all subscribers once. */
export class Store {
  private state: CockpitState;
  private listeners = new Set<Listener>();

  constructor(state: CockpitState = initialState()) {
    this.state = state;
  }

  get(): CockpitState {
    return this.state;
  }

  patch(partial: Partial<CockpitState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }
}
