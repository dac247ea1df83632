// Session dashboard: create or join a session, watch the fitness scatter
// fill in from the event stream, adjust evolution parameters, and replay
// stored evaluations.  Displayed parameter values always come from server
// responses (the PATCH echo or a params-changed event), never from what
// was typed.

import { ApiClient, openEvents, type EventStream } from './api.js';
import { revisitBest, loadEvaluation } from './actions.js';
import { Player } from './player.js';
import { drawScatter, ScatterModel } from './scatter.js';
import { showLog } from './playerview.js';
import type { EvalRecord, EvolutionParams, ServerEvent, SessionInfo } from './types.js';
import { ANIMAT_KINDS } from './types.js';

const PARAM_KEYS = [
  'mutation_sigma_scale',
  'per_gene_mutation_prob',
  'settle_duration',
  'eval_duration',
] as const;

// State
const api = new ApiClient('');
const scatter = new ScatterModel();
let sessionId: string | null = null;
let stream: EventStream | null = null;
let evalCount = 0;
let bestRecord: EvalRecord | null = null;

// DOM elements, resolved in initDashboard
let statusEl: HTMLElement;
let sessionSelect: HTMLSelectElement;
let joinBtn: HTMLButtonElement;
let refreshBtn: HTMLButtonElement;
let createKind: HTMLSelectElement;
let createSeed: HTMLInputElement;
let createBtn: HTMLButtonElement;
let closeBtn: HTMLButtonElement;
let infoEl: HTMLElement;
let paramsForm: HTMLFormElement;
let paramsEcho: HTMLElement;
let scatterCanvas: HTMLCanvasElement;
let scatterCtx: CanvasRenderingContext2D;
let bestEl: HTMLElement;
let revisitBtn: HTMLButtonElement;
let evalIndexInput: HTMLInputElement;
let loadEvalBtn: HTMLButtonElement;

function setStatus(text: string, isError = false): void {
  statusEl.textContent = text;
  statusEl.classList.toggle('error', isError);
}

function redrawScatter(): void {
  drawScatter(scatterCtx, scatter, scatterCanvas.width, scatterCanvas.height);
}

function renderInfo(): void {
  infoEl.textContent =
    sessionId === null ? 'no session' : `${sessionId}  |  ${evalCount} evaluations`;
  bestEl.textContent =
    bestRecord === null
      ? 'no evaluations yet'
      : `best fitness ${bestRecord.fitness.toFixed(4)} at eval ${bestRecord.eval_index}`;
}

function renderParams(params: EvolutionParams): void {
  const parts = PARAM_KEYS.map((key) => `${key} = ${params[key]}`);
  paramsEcho.textContent = parts.join('\n');
  for (const key of PARAM_KEYS) {
    const input = paramsForm.elements.namedItem(key) as HTMLInputElement | null;
    if (input !== null) {
      input.placeholder = String(params[key]);
    }
  }
}

function applyRecord(record: EvalRecord): void {
  if (scatter.addRecord(record)) {
    evalCount = Math.max(evalCount, record.eval_index + 1);
  }
  if (!record.diverged && (bestRecord === null || record.fitness > bestRecord.fitness)) {
    bestRecord = record;
  }
  renderInfo();
  redrawScatter();
}

function handleEvent(event: ServerEvent): void {
  switch (event.event) {
    case 'snapshot':
      evalCount = event.eval_count;
      bestRecord = event.best;
      renderParams(event.params);
      renderInfo();
      if (event.closed) {
        setStatus('session is closed (read-only)');
      }
      break;
    case 'eval-recorded':
      applyRecord(event.record);
      break;
    case 'parent-replaced':
      break;
    case 'params-changed':
      renderParams(event.params);
      break;
    case 'session-closed':
      setStatus('session closed');
      stream = null;
      break;
    case 'lagged':
      // The queue overflowed; re-sync from history and reconnect.
      setStatus('event stream lagged, re-syncing');
      stream = null;
      if (sessionId !== null) {
        void joinSession(sessionId);
      }
      break;
  }
}

async function refreshSessionList(): Promise<void> {
  const sessions = await api.listSessions();
  sessionSelect.replaceChildren();
  for (const info of sessions) {
    const option = document.createElement('option');
    option.value = info.session_id;
    option.textContent = `${info.session_id}  (${info.kind}, ${info.eval_count} evals${info.closed ? ', closed' : ''})`;
    sessionSelect.appendChild(option);
  }
  if (sessions.length === 0) {
    const option = document.createElement('option');
    option.value = '';
    option.textContent = 'no sessions on server';
    sessionSelect.appendChild(option);
  }
}

async function joinSession(id: string): Promise<void> {
  if (stream !== null) {
    stream.close();
    stream = null;
  }
  scatter.clear();
  bestRecord = null;
  evalCount = 0;

  const info: SessionInfo = await api.getSession(id);
  sessionId = id;
  renderParams(info.params);

  const history = await api.getHistory(id);
  scatter.seedFromHistory(history);
  for (const record of history) {
    if (!record.diverged && (bestRecord === null || record.fitness > bestRecord.fitness)) {
      bestRecord = record;
    }
  }
  evalCount = info.eval_count;
  renderInfo();
  redrawScatter();

  stream = openEvents(
    '',
    id,
    handleEvent,
    (message) => setStatus(message, true),
  );
  setStatus(`joined session ${id}`);
}

async function createSession(): Promise<void> {
  const body: Parameters<ApiClient['createSession']>[0] = { kind: createKind.value };
  if (createSeed.value.trim() !== '') {
    body.seed = Number(createSeed.value);
  }
  const info = await api.createSession(body);
  await refreshSessionList();
  sessionSelect.value = info.session_id;
  await joinSession(info.session_id);
}

async function applyParams(): Promise<void> {
  if (sessionId === null) {
    setStatus('join a session first', true);
    return;
  }
  const patch: Partial<EvolutionParams> = {};
  for (const key of PARAM_KEYS) {
    const input = paramsForm.elements.namedItem(key) as HTMLInputElement | null;
    if (input !== null && input.value.trim() !== '') {
      patch[key] = Number(input.value);
    }
  }
  if (Object.keys(patch).length === 0) {
    setStatus('nothing to change');
    return;
  }
  // Render only what the server echoes back, then clear the inputs.
  const echoed = await api.patchParams(sessionId, patch);
  renderParams(echoed);
  paramsForm.reset();
  setStatus('parameters updated');
}

async function onRevisitBest(): Promise<void> {
  if (sessionId === null) {
    setStatus('join a session first', true);
    return;
  }
  const scratch = new Player();
  const best = await revisitBest(api, sessionId, scratch);
  if (best === null || scratch.log === null) {
    setStatus('no evaluations yet', true);
    return;
  }
  showLog(scratch.log, `best: eval ${best.eval_index}, fitness ${best.fitness.toFixed(4)}`);
}

async function onLoadEval(): Promise<void> {
  if (sessionId === null) {
    setStatus('join a session first', true);
    return;
  }
  const index = Number(evalIndexInput.value);
  if (!Number.isInteger(index) || index < 0) {
    setStatus('evaluation index must be a non-negative integer', true);
    return;
  }
  const scratch = new Player();
  await loadEvaluation(api, sessionId, index, scratch);
  if (scratch.log !== null) {
    showLog(scratch.log, `eval ${index}`);
  }
}

function guard(action: () => Promise<void>): () => void {
  return () => {
    action().catch((error: unknown) => {
      setStatus(error instanceof Error ? error.message : String(error), true);
    });
  };
}

export function initDashboard(): void {
  statusEl = document.getElementById('status')!;
  sessionSelect = document.getElementById('session-list') as HTMLSelectElement;
  joinBtn = document.getElementById('btn-join') as HTMLButtonElement;
  refreshBtn = document.getElementById('btn-refresh') as HTMLButtonElement;
  createKind = document.getElementById('create-kind') as HTMLSelectElement;
  createSeed = document.getElementById('create-seed') as HTMLInputElement;
  createBtn = document.getElementById('btn-create') as HTMLButtonElement;
  closeBtn = document.getElementById('btn-close-session') as HTMLButtonElement;
  infoEl = document.getElementById('session-info')!;
  paramsForm = document.getElementById('params-form') as HTMLFormElement;
  paramsEcho = document.getElementById('params-echo')!;
  scatterCanvas = document.getElementById('scatter-canvas') as HTMLCanvasElement;
  scatterCtx = scatterCanvas.getContext('2d') as CanvasRenderingContext2D;
  bestEl = document.getElementById('best-info')!;
  revisitBtn = document.getElementById('btn-revisit-best') as HTMLButtonElement;
  evalIndexInput = document.getElementById('eval-index') as HTMLInputElement;
  loadEvalBtn = document.getElementById('btn-load-eval') as HTMLButtonElement;

  for (const kind of ANIMAT_KINDS) {
    const option = document.createElement('option');
    option.value = kind;
    option.textContent = kind;
    createKind.appendChild(option);
  }

  refreshBtn.addEventListener('click', guard(refreshSessionList));
  joinBtn.addEventListener(
    'click',
    guard(async () => {
      if (sessionSelect.value !== '') {
        await joinSession(sessionSelect.value);
      }
    }),
  );
  createBtn.addEventListener('click', guard(createSession));
  closeBtn.addEventListener(
    'click',
    guard(async () => {
      if (sessionId !== null) {
        await api.closeSession(sessionId);
        setStatus('session closed');
      }
    }),
  );
  paramsForm.addEventListener('submit', (e) => {
    e.preventDefault();
    guard(applyParams)();
  });
  revisitBtn.addEventListener('click', guard(onRevisitBest));
  loadEvalBtn.addEventListener('click', guard(onLoadEval));

  renderInfo();
  redrawScatter();
  guard(refreshSessionList)();
}
