// UI actions that combine API calls with player state.  Kept out of the
// DOM layer so the fetch/replay flow can run under test with a scripted
// fetch.

import type { ApiClient } from './api.js';
import { SimLogParser, type SimLog } from './simlog.js';
import type { Player } from './player.js';
import type { EvalRecord } from './types.js';

// Parses a log response incrementally so a long replay starts consuming
// without holding off for the full download.
export async function parseLogResponse(response: Response): Promise<SimLog> {
  const parser = new SimLogParser();
  if (response.body !== null) {
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        break;
      }
      parser.feed(decoder.decode(value, { stream: true }));
    }
    parser.feed(decoder.decode());
  } else {
    parser.feed(await response.text());
  }
  return parser.end();
}

// Fetches the current best record and its stored log, then loads it into
// the player positioned at the first frame.  Returns the record, or null
// when the session has no evaluations yet.
export async function revisitBest(
  api: ApiClient,
  sessionId: string,
  player: Player,
): Promise<EvalRecord | null> {
  const best = await api.getBest(sessionId);
  if (best === null) {
    return null;
  }
  const response = await api.getLogResponse(sessionId, best.eval_index);
  player.load(await parseLogResponse(response));
  return best;
}

// Loads an arbitrary stored evaluation into the player.
export async function loadEvaluation(
  api: ApiClient,
  sessionId: string,
  evalIndex: number,
  player: Player,
): Promise<void> {
  const response = await api.getLogResponse(sessionId, evalIndex);
  player.load(await parseLogResponse(response));
}
