// Reader for the JSON-lines simulation log format.  Only the fields the
// player needs are validated here; unknown fields pass through untouched
// so logs written by newer tools still play.

export interface LogBody {
  name: string;
  half_extents: [number, number, number];
  mass: number;
  color?: [number, number, number];
  [extra: string]: unknown;
}

export interface LogHeader {
  version: number;
  dt: number;
  gravity: [number, number, number];
  bodies: LogBody[];
  meta?: Record<string, unknown>;
  [extra: string]: unknown;
}

// One rigid-body state: [x, y, z, qw, qx, qy, qz].
export type BodyState = [number, number, number, number, number, number, number];

export interface LogFrame {
  t: number;
  states: BodyState[];
}

export interface SimLog {
  header: LogHeader;
  frames: LogFrame[];
}

export class SimLogParseError extends Error {
  constructor(
    public line: number,
    message: string,
  ) {
    super(`line ${line}: ${message}`);
  }
}

const SUPPORTED_VERSION = 1;

function fail(line: number, message: string): never {
  throw new SimLogParseError(line, message);
}

function parseHeader(raw: unknown, line: number): LogHeader {
  if (typeof raw !== 'object' || raw === null || Array.isArray(raw)) {
    fail(line, 'header is not an object');
  }
  const header = raw as Record<string, unknown>;
  if (header.version !== SUPPORTED_VERSION) {
    fail(line, `unsupported version ${String(header.version)}`);
  }
  if (typeof header.dt !== 'number' || !Number.isFinite(header.dt) || header.dt <= 0) {
    fail(line, 'header dt must be a positive number');
  }
  if (!Array.isArray(header.bodies) || header.bodies.length === 0) {
    fail(line, 'header bodies must be a non-empty list');
  }
  for (const body of header.bodies) {
    const b = body as Record<string, unknown>;
    if (typeof b !== 'object' || b === null || typeof b.name !== 'string') {
      fail(line, 'each body needs a name');
    }
    if (!Array.isArray(b.half_extents) || b.half_extents.length !== 3) {
      fail(line, `body ${String(b.name)} needs half_extents of length 3`);
    }
  }
  return header as unknown as LogHeader;
}

function parseFrame(raw: unknown, line: number, nBodies: number): LogFrame {
  if (typeof raw !== 'object' || raw === null || Array.isArray(raw)) {
    fail(line, 'frame is not an object');
  }
  const frame = raw as Record<string, unknown>;
  if (typeof frame.t !== 'number' || !Number.isFinite(frame.t)) {
    fail(line, 'frame t must be a finite number');
  }
  if (!Array.isArray(frame.states)) {
    fail(line, 'frame states must be a list');
  }
  if (frame.states.length !== nBodies) {
    fail(line, `frame has ${frame.states.length} states, header has ${nBodies} bodies`);
  }
  for (const state of frame.states) {
    if (!Array.isArray(state) || state.length !== 7) {
      fail(line, 'each state must be 7 numbers (position then orientation)');
    }
    for (const value of state) {
      if (typeof value !== 'number' || !Number.isFinite(value)) {
        fail(line, 'state values must be finite numbers');
      }
    }
  }
  return { t: frame.t, states: frame.states as BodyState[] };
}

// Incremental parser: feed() chunks as they arrive (fetch streaming or a
// file reader), call end() once to flush the last unterminated line.
export class SimLogParser {
  header: LogHeader | null = null;
  frames: LogFrame[] = [];

  private buffer = '';
  private line = 0;
  private done = false;

  feed(chunk: string): void {
    if (this.done) {
      throw new Error('parser already ended');
    }
    this.buffer += chunk;
    let index = this.buffer.indexOf('\n');
    while (index >= 0) {
      const text = this.buffer.slice(0, index);
      this.buffer = this.buffer.slice(index + 1);
      this.takeLine(text);
      index = this.buffer.indexOf('\n');
    }
  }

  end(): SimLog {
    if (!this.done) {
      this.done = true;
      if (this.buffer.trim() !== '') {
        this.takeLine(this.buffer);
      }
      this.buffer = '';
      if (this.header === null) {
        fail(1, 'log is empty');
      }
    }
    return { header: this.header as LogHeader, frames: this.frames };
  }

  private takeLine(text: string): void {
    this.line += 1;
    if (text.trim() === '') {
      return;
    }
    let raw: unknown;
    try {
      raw = JSON.parse(text);
    } catch {
      fail(this.line, 'not valid JSON');
    }
    if (this.header === null) {
      this.header = parseHeader(raw, this.line);
    } else {
      this.frames.push(parseFrame(raw, this.line, this.header.bodies.length));
    }
  }
}

export function parseSimLog(text: string): SimLog {
  const parser = new SimLogParser();
  parser.feed(text);
  return parser.end();
}
