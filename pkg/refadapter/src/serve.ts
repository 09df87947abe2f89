/**
 * Line-delimited JSON score server.
 *
 * One request object per stdin line, one response object per stdout line:
 *
 *   {"type": "hello", "protocol": 1}            -> {"type": "ready", "name", "range"}
 *   {"type": "score", "id", "reference", "candidate"}
 *                                               -> {"type": "score", "id", "value"}
 *   {"type": "shutdown"}                        -> clean exit
 *
 * Scoring requests received before the hello handshake, requests with an
 * unknown type, and structurally invalid score requests are answered with
 * {"type": "error", "id", "message"}.  Lines that are not JSON at all get
 * a stderr diagnostic and no reply, since there is no id to attach.
 */

import * as readline from 'node:readline';

/** Anything that maps a reference/candidate pair to a number in [0, 1]. */
export type Scorer = (reference: string, candidate: string) => number;

/** Decimal places kept when a score is written to the wire. */
const WIRE_PRECISION = 6;

function emit(message: Record<string, unknown>): void {
  process.stdout.write(JSON.stringify(message) + '\n');
}

function emitError(id: unknown, message: string): void {
  emit({ type: 'error', id: typeof id === 'number' ? id : null, message });
}

/**
 * Run the request loop until shutdown or stdin EOF.
 *
 * The scorer is a plain function so model-backed implementations can be
 * swapped in without touching the protocol handling.
 */
export function serve(name: string, scorer: Scorer): void {
  // A consumer that hangs up mid-reply would otherwise crash us with an
  // unhandled EPIPE; a broken pipe is a failed session, not a clean exit.
  process.stdout.on('error', () => {
    process.exit(1);
  });

  const rl = readline.createInterface({ input: process.stdin });
  let greeted = false;

  rl.on('line', (line: string) => {
    const trimmed = line.trim();
    if (trimmed === '') {
      return;
    }

    let request: unknown;
    try {
      request = JSON.parse(trimmed);
    } catch {
      process.stderr.write(`discarding unparseable request line: ${trimmed}\n`);
      return;
    }
    if (typeof request !== 'object' || request === null || Array.isArray(request)) {
      emitError(null, 'request must be a JSON object');
      return;
    }

    const message = request as Record<string, unknown>;
    switch (message.type) {
      case 'hello':
        greeted = true;
        emit({ type: 'ready', name, range: [0, 1] });
        return;
      case 'score': {
        if (!greeted) {
          emitError(message.id, 'score request before hello handshake');
          return;
        }
        const { id, reference, candidate } = message;
        if (typeof id !== 'number') {
          emitError(id, 'score request is missing a numeric id');
          return;
        }
        if (typeof reference !== 'string' || typeof candidate !== 'string') {
          emitError(id, 'score request needs string reference and candidate');
          return;
        }
        const value = Number(scorer(reference, candidate).toFixed(WIRE_PRECISION));
        emit({ type: 'score', id, value });
        return;
      }
      case 'shutdown':
        rl.close();
        process.exit(0);
        return;
      default:
        emitError(message.id, `unknown request type: ${String(message.type)}`);
    }
  });
}
