import type {
  CaseSnapshot,
  HealthStatus,
  Recommendation,
  ServiceMeta,
  WhatIfResult,
} from './types.js';

/** Error responses carry a machine-readable code; branch on it, not the text. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export interface EventInput {
  activity: string;
  kpi?: number;
  timestamp?: string;
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetch(url, init);
  } catch {
    // status 0: the request never reached the service (poller shows stale).
    throw new ApiError(0, 'unreachable', `cannot reach ${url}`);
  }
  if (!res.ok) {
    const body = await res.json().catch(() => null);
    const err = (body as { error?: { code?: string; message?: string } } | null)?.error;
    throw new ApiError(
      res.status,
      err?.code ?? `http-${res.status}`,
      err?.message ?? `${res.status} on ${url}`,
    );
  }
  return res.json() as Promise<T>;
}

function post(body: unknown): RequestInit {
  return {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify(body),
  };
}

/**
 * Typed client over the service endpoints. `base` is the URL prefix the
 * service is reachable under: `/api` behind the bundled proxy, or a full
 * origin when talking to it directly.
 */
export function createApi(base = '/api') {
  const caseUrl = (caseId: string) => `${base}/cases/${encodeURIComponent(caseId)}`;
  return {
    health: () => request<HealthStatus>(`${base}/health`),
    meta: () => request<ServiceMeta>(`${base}/meta`),
    createCase: (caseId?: string) =>
      request<CaseSnapshot>(`${base}/cases`, post({ case_id: caseId ?? null })),
    getCase: (caseId: string) => request<CaseSnapshot>(caseUrl(caseId)),
    recordActivity: (caseId: string, event: EventInput) =>
      request<CaseSnapshot>(`${caseUrl(caseId)}/events`, post(event)),
    fetchRecommendation: (caseId: string, k?: number) =>
      request<Recommendation>(
        `${caseUrl(caseId)}/recommendation${k != null ? `?k=${k}` : ''}`,
      ),
    whatIf: (caseId: string, events: EventInput[], k?: number) =>
      request<WhatIfResult>(`${caseUrl(caseId)}/what-if`, post({ events, k: k ?? null })),
  };
}

export type CockpitApi = ReturnType<typeof createApi>;
