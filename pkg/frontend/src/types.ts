/**
 * Wire types for the recommendation service. Field names and shapes mirror
 * the server payloads verbatim; the cockpit never reshapes them.
 */

export type CaseStatus = 'open' | 'terminated';

export type DecisionPath =
  | 'below-threshold-prediction'
  | 'optimized-candidate'
  | 'fallback-predicted-activity'
  | 'intervention';

export interface CaseEvent {
  activity: string;
  kpi: number;
  timestamp: string | null;
}

export interface Marking {
  executed: string[];
  included: string[];
  pending: string[];
}

export interface NonConformance {
  failing_index: number;
  reason: 'not-enabled' | 'not-accepting';
}

export interface CaseSnapshot {
  schema_version: number;
  case_id: string;
  status: CaseStatus;
  events: CaseEvent[];
  total_kpi: number;
  conformant: boolean;
  unknown_activities: string[];
  n_recommendations: number;
  created_at: string;
  updated_at: string;
  /** null while the recorded prefix violates the process model. */
  marking: Marking | null;
  accepting: boolean;
  enabled: string[];
  non_conformance?: NonConformance;
}

export interface Recommendation {
  schema_version: number;
  case_id: string;
  decision_path: DecisionPath;
  /** null only on the intervention path. */
  action: string | null;
  /** [activity, kpi] steps; the first step is the recommended action. */
  projected_suffix: [string, number][];
  projected_total_kpi: number;
  threshold: number;
  k: number;
  retrieved: number;
  simulated_out: number;
}

export interface WhatIfResult {
  schema_version: number;
  case_id: string;
  hypothetical: CaseEvent[];
  conformant: boolean;
  projected_total_kpi: number;
  /** null when the hypothetical case is closed or still shorter than 2 events. */
  recommendation: Recommendation | null;
  non_conformance?: NonConformance;
}

export interface ServiceMeta {
  schema_version: number;
  threshold: number;
  k: number;
  vocabulary: string[];
  end_symbol: string;
  strict: boolean;
  artifacts: Record<string, unknown>;
}

export interface HealthStatus {
  schema_version: number;
  status: 'ok';
}

export interface ErrorBody {
  schema_version: number;
  error: { code: string; message: string };
}
