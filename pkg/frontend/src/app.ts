/**
 * Cockpit wiring. Static controls live in index.html; this module fills the
 * dynamic regions from the store and forwards every user action to the
 * service. Nothing is computed locally: actions, suffixes, and totals all
 * come back in server responses, and a 1.5 s poll keeps the view honest.
 */

import { ApiError, createApi } from './api.js';
import { startPoller } from './poller.js';
import {
  acceptEvent,
  canAccept,
  inputsLocked,
  reconcile,
  Store,
} from './state.js';
import {
  fmtKpi,
  renderCaseHeader,
  renderDraft,
  renderEnabled,
  renderMarking,
  renderRecommendation,
  renderTimeline,
  renderWhatIf,
} from './render.js';

const params = new URLSearchParams(location.search);
const api = createApi(params.get('api') ?? '/api');
const store = new Store();

const $ = (id: string) => document.getElementById(id)!;
const input = (id: string) => $(id) as HTMLInputElement;
const select = (id: string) => $(id) as HTMLSelectElement;
const button = (id: string) => $(id) as HTMLButtonElement;

// ─── Rendering ──────────────────────

const LOCKABLE = [
  'caseIdInput',
  'activitySelect',
  'kpiInput',
  'recordBtn',
  'recommendBtn',
  'wiActivitySelect',
  'wiKpiInput',
  'wiAddBtn',
  'wiRunBtn',
  'wiClearBtn',
];

function render(): void {
  const state = store.get();
  const endSymbol = state.meta?.end_symbol ?? 'End';
  $('caseHeader').innerHTML = renderCaseHeader(state.snapshot, state.stale);
  $('timeline').innerHTML = renderTimeline(state.snapshot, endSymbol);
  $('markingPanel').innerHTML = renderMarking(state.snapshot);
  $('enabledPanel').innerHTML = renderEnabled(state.snapshot);
  $('recommendationPanel').innerHTML = renderRecommendation(state.recommendation);
  $('draftList').innerHTML = renderDraft(state.draft);
  $('whatIfPanel').innerHTML = renderWhatIf(state.whatIf, state.meta?.threshold ?? null);
  $('staleBanner').style.display = state.stale ? 'block' : 'none';
  $('notice').textContent = state.notice ?? '';
  $('thresholdDisplay').textContent =
    state.meta !== null ? `t = ${fmtKpi(state.meta.threshold)}` : '';

  const locked = inputsLocked(state);
  for (const id of LOCKABLE) ($(id) as HTMLButtonElement).disabled = locked;
  button('acceptBtn').disabled = !canAccept(state);
  // Starting a case must stay possible while no case is loaded.
  button('newCaseBtn').disabled = state.busy;
  select('kSelect').value = String(state.k);
}

function setVocabulary(activities: string[]): void {
  for (const id of ['activitySelect', 'wiActivitySelect']) {
    const sel = select(id);
    sel.innerHTML = '';
    for (const a of activities) {
      const opt = document.createElement('option');
      opt.value = a;
      opt.textContent = a;
      sel.appendChild(opt);
    }
  }
}

// ─── Actions ──────────────────────

/** Wrap a server call: lock inputs, surface errors inline, never crash. */
async function act(run: () => Promise<void>): Promise<void> {
  store.patch({ busy: true, notice: null });
  try {
    await run();
    store.patch({ busy: false });
  } catch (err) {
    const notice = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    store.patch({ busy: false, notice });
  }
}

function startCase(): Promise<void> {
  return act(async () => {
    const wanted = input('caseIdInput').value.trim();
    const snapshot = await api.createCase(wanted === '' ? undefined : wanted);
    store.patch({
      caseId: snapshot.case_id,
      snapshot,
      stale: false,
      recommendation: null,
      recommendationBasis: null,
      whatIf: null,
      draft: [],
    });
    input('caseIdInput').value = '';
  });
}

function recordActivity(activity: string, kpi: number): Promise<void> {
  return act(async () => {
    const state = store.get();
    if (state.caseId === null) return;
    const snapshot = await api.recordActivity(state.caseId, { activity, kpi });
    store.patch(reconcile(store.get(), snapshot));
  });
}

function fetchRecommendation(): Promise<void> {
  return act(async () => {
    const state = store.get();
    if (state.caseId === null || state.snapshot === null) return;
    const basis = state.snapshot.events.length;
    const recommendation = await api.fetchRecommendation(state.caseId, state.k);
    store.patch({ recommendation, recommendationBasis: basis });
  });
}

function acceptRecommendation(): Promise<void> {
  const rec = store.get().recommendation;
  if (rec === null || rec.action === null) return Promise.resolve();
  const event = acceptEvent(rec);
  return recordActivity(event.activity, event.kpi ?? 0);
}

function runWhatIf(): Promise<void> {
  return act(async () => {
    const state = store.get();
    if (state.caseId === null || state.draft.length === 0) return;
    const events = state.draft.map((s) => ({ activity: s.activity, kpi: s.kpi }));
    const whatIf = await api.whatIf(state.caseId, events, state.k);
    store.patch({ whatIf });
  });
}

async function poll(): Promise<void> {
  const state = store.get();
  if (state.meta === null) {
    try {
      const meta = await api.meta();
      store.patch({ meta, k: meta.k });
      setVocabulary(meta.vocabulary);
    } catch {
      store.patch({ stale: true });
      return;
    }
  }
  if (state.caseId === null) return;
  try {
    const snapshot = await api.getCase(state.caseId);
    store.patch(reconcile(store.get(), snapshot));
  } catch {
    store.patch({ stale: true });
  }
}

// ─── Boot ──────────────────────

function kpiValue(id: string): number {
  const raw = Number(input(id).value);
  return Number.isFinite(raw) && raw >= 0 ? raw : 0;
}

store.subscribe(render);

button('newCaseBtn').addEventListener('click', () => void startCase());
button('recordBtn').addEventListener('click', () =>
  void recordActivity(select('activitySelect').value, kpiValue('kpiInput')),
);
button('recommendBtn').addEventListener('click', () => void fetchRecommendation());
button('acceptBtn').addEventListener('click', () => void acceptRecommendation());
select('kSelect').addEventListener('change', () => {
  store.patch({ k: Number(select('kSelect').value) });
});
button('wiAddBtn').addEventListener('click', () => {
  const step = { activity: select('wiActivitySelect').value, kpi: kpiValue('wiKpiInput') };
  if (step.activity === '') return;
  store.patch({ draft: [...store.get().draft, step] });
});
button('wiRunBtn').addEventListener('click', () => void runWhatIf());
button('wiClearBtn').addEventListener('click', () => {
  store.patch({ draft: [], whatIf: null });
});

render();
void poll();
startPoller(poll, 1500);
