// Wire types for the session server's JSON API.  Field names are the
// server's exactly; keep them snake_case.

export interface EvolutionParams {
  mutation_sigma_scale: number;
  per_gene_mutation_prob: number;
  eval_duration: number;
  settle_duration: number;
}

export interface EvalRecord {
  eval_index: number;
  kind: string;
  genes: number[];
  fitness: number;
  accepted: boolean;
  rng_seed: number;
  diverged: boolean;
  log_digest: string;
  verified: boolean;
  worker_id: string;
}

export interface SessionInfo {
  session_id: string;
  kind: string;
  seed: number;
  params: EvolutionParams;
  eval_count: number;
  best: EvalRecord | null;
  parent_fitness: number | null;
  parent_version: number;
  open_tasks: number;
  lease_seconds: number;
  verify_fraction: number;
  closed: boolean;
}

export interface TaskMsg {
  task_id: string;
  session_id: string;
  genome: { kind: string; genes: number[] };
  spec: { kind: string; genome_length: number; n_joints: number };
  params: EvolutionParams;
}

export type ServerEvent =
  | {
      event: 'snapshot';
      session_id: string;
      eval_count: number;
      params: EvolutionParams;
      best: EvalRecord | null;
      parent_version: number;
      closed: boolean;
    }
  | { event: 'eval-recorded'; record: EvalRecord }
  | { event: 'parent-replaced'; eval_index: number; fitness: number; parent_version: number }
  | { event: 'params-changed'; params: EvolutionParams }
  | { event: 'session-closed' }
  | { event: 'lagged' };

export const ANIMAT_KINDS = ['quadruped', 'octopod', 'sims-crawler'] as const;
