/**
 * HTML fragment builders. All of them are pure string functions so the view
 * layer can be exercised without a browser; app.ts owns the actual DOM.
 */

import type {
  CaseSnapshot,
  DecisionPath,
  Marking,
  NonConformance,
  Recommendation,
  WhatIfResult,
} from './types.js';
import type { DraftStep } from './state.js';

export function esc(s: string): string {
  return s
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;');
}

export function fmtKpi(n: number): string {
  return (Math.round(n * 100) / 100).toString();
}

const DECISION_LABELS: Record<DecisionPath, string> = {
  'below-threshold-prediction': 'prediction',
  'optimized-candidate': 'optimized',
  'fallback-predicted-activity': 'fallback',
  intervention: 'intervention',
};

export function decisionLabel(path: DecisionPath): string {
  return DECISION_LABELS[path] ?? path;
}

function violationNote(nc: NonConformance): string {
  return `<div class="violation">process violation at event ${nc.failing_index + 1}: ${esc(nc.reason)}</div>`;
}

export function renderTimeline(snapshot: CaseSnapshot | null, endSymbol = 'End'): string {
  if (snapshot === null) return '<div class="placeholder">no case yet</div>';
  if (snapshot.events.length === 0) return '<div class="placeholder">no events recorded</div>';
  const rows = snapshot.events.map((e, i) => {
    const cls = e.activity === endSymbol ? 'ev end' : 'ev';
    const ts = e.timestamp ? `<span class="ts">${esc(e.timestamp)}</span>` : '';
    return (
      `<div class="${cls}"><span class="idx">${i + 1}</span>` +
      `<span class="act">${esc(e.activity)}</span>` +
      `<span class="kpi">${fmtKpi(e.kpi)}</span>${ts}</div>`
    );
  });
  return rows.join('');
}

function badgeGroup(label: string, activities: string[]): string {
  const chips =
    activities.length === 0
      ? '<span class="none">none</span>'
      : activities.map((a) => `<span class="badge">${esc(a)}</span>`).join('');
  return `<div class="badges"><span class="lbl">${label}</span>${chips}</div>`;
}

export function renderMarking(snapshot: CaseSnapshot | null): string {
  if (snapshot === null) return '<div class="placeholder">no case yet</div>';
  const marking: Marking | null = snapshot.marking;
  if (marking === null) {
    return violationNote(snapshot.non_conformance ?? { failing_index: 0, reason: 'not-enabled' });
  }
  const accepting = snapshot.accepting
    ? '<span class="chip ok">accepting</span>'
    : '<span class="chip warn">not accepting</span>';
  return (
    accepting +
    badgeGroup('executed', marking.executed) +
    badgeGroup('included', marking.included) +
    badgeGroup('pending', marking.pending)
  );
}

export function renderEnabled(snapshot: CaseSnapshot | null): string {
  if (snapshot === null) return '<div class="placeholder">no case yet</div>';
  if (snapshot.status === 'terminated') return '<div class="placeholder">case terminated</div>';
  if (snapshot.enabled.length === 0) return '<div class="placeholder">nothing enabled</div>';
  return snapshot.enabled.map((a) => `<span class="badge on">${esc(a)}</span>`).join('');
}

export function renderGauge(total: number, threshold: number): string {
  const over = total > threshold;
  const pct = threshold > 0 ? Math.min(100, (total / threshold) * 100) : 100;
  return (
    `<div class="gauge ${over ? 'over' : 'ok'}">` +
    `<div class="fill" style="width:${pct.toFixed(1)}%"></div>` +
    `<span class="nums">${fmtKpi(total)} / ${fmtKpi(threshold)}</span></div>`
  );
}

export function renderRecommendation(rec: Recommendation | null): string {
  if (rec === null) return '<div class="placeholder">no recommendation requested</div>';
  const banner = `<div class="decision ${esc(rec.decision_path)}">${decisionLabel(rec.decision_path)}</div>`;
  if (rec.decision_path === 'intervention') {
    return (
      banner +
      '<div class="violation">the recorded prefix no longer conforms; no action to suggest</div>'
    );
  }
  const steps = rec.projected_suffix
    .map(
      ([act, kpi], i) =>
        `<div class="ev${i === 0 ? ' next' : ''}"><span class="idx">+${i + 1}</span>` +
        `<span class="act">${esc(act)}</span><span class="kpi">${fmtKpi(kpi)}</span></div>`,
    )
    .join('');
  const counts =
    `<div class="counts">retrieved ${rec.retrieved} / simulated out ${rec.simulated_out}` +
    ` / k ${rec.k}</div>`;
  return (
    banner +
    `<div class="action">next: <b>${esc(rec.action ?? '')}</b></div>` +
    `<div class="suffix">${steps}</div>` +
    renderGauge(rec.projected_total_kpi, rec.threshold) +
    counts
  );
}

export function renderDraft(draft: DraftStep[]): string {
  if (draft.length === 0) return '<span class="placeholder">empty sequence</span>';
  return draft
    .map((s) => `<span class="badge">${esc(s.activity)} · ${fmtKpi(s.kpi)}</span>`)
    .join('');
}

export function renderWhatIf(result: WhatIfResult | null, threshold: number | null): string {
  if (result === null) return '<div class="placeholder">no scenario explored</div>';
  const verdict = result.conformant
    ? '<span class="chip ok">conformant</span>'
    : '<span class="chip bad">non-conformant</span>';
  const violation = result.non_conformance ? violationNote(result.non_conformance) : '';
  const steps = result.hypothetical
    .map(
      (e, i) =>
        `<div class="ev"><span class="idx">+${i + 1}</span>` +
        `<span class="act">${esc(e.activity)}</span><span class="kpi">${fmtKpi(e.kpi)}</span></div>`,
    )
    .join('');
  const gauge = threshold !== null ? renderGauge(result.projected_total_kpi, threshold) : '';
  const nested = result.recommendation
    ? `<div class="nested"><span class="lbl">then</span>${renderRecommendation(result.recommendation)}</div>`
    : '';
  return (
    `<div class="verdict">${verdict}<span class="nums">total ${fmtKpi(result.projected_total_kpi)}</span></div>` +
    violation +
    `<div class="suffix">${steps}</div>` +
    gauge +
    nested
  );
}

export function renderCaseHeader(snapshot: CaseSnapshot | null, stale: boolean): string {
  if (snapshot === null) return '<span class="placeholder">start or load a case</span>';
  const status =
    snapshot.status === 'open'
      ? '<span class="chip ok">open</span>'
      : '<span class="chip warn">terminated</span>';
  const conf = snapshot.conformant ? '' : '<span class="chip bad">non-conformant</span>';
  const staleChip = stale ? '<span class="chip bad">stale</span>' : '';
  const unknown =
    snapshot.unknown_activities.length > 0
      ? `<span class="chip warn">unknown: ${esc(snapshot.unknown_activities.join(', '))}</span>`
      : '';
  return (
    `<b>${esc(snapshot.case_id)}</b>${status}${conf}${staleChip}${unknown}` +
    `<span class="stat">total <b>${fmtKpi(snapshot.total_kpi)}</b></span>` +
    `<span class="stat">${snapshot.events.length} events</span>` +
    `<span class="stat">${snapshot.n_recommendations} recommendations</span>`
  );
}
