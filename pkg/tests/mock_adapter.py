"""Scriptable external-metric adapter for protocol tests.

Usage: python3 mock_adapter.py MODE [ARG]

Modes:
  normal      score every request in order with a text-derived value
  shuffle     buffer ARG requests (default 3), answer them in reverse
  outofrange  always answer 1.7
  garbage     print a non-JSON line instead of ready
  exit        exit immediately without reading stdin
  silent      read stdin but never answer anything
  stall       handshake normally, then never answer score requests
  die_mid     answer the first score request, then exit
  error       answer the first score request with a protocol error message
  badready    send a ready whose range is inverted
  rouge       independent ROUGE-L reimplementation (conformance check)
  lookup      answer from a JSON file ARG mapping sha256(candidate) -> value
"""

import hashlib
import json
import re
import sys


def emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def text_value(reference, candidate):
    digest = hashlib.sha256((reference + "|" + candidate).encode("utf-8")).hexdigest()
    return int(digest[:8], 16) / 0xFFFFFFFF


def rouge_value(reference, candidate):
    # Deliberately a fresh implementation: regex tokenizer plus a full
    # DP matrix, unlike the harness's scanner and rolling row.
    ref = re.findall(r"[a-z0-9]+", reference.lower())
    cand = re.findall(r"[a-z0-9]+", candidate.lower())
    if not ref and not cand:
        return 1.0
    if not ref or not cand:
        return 0.0
    table = [[0] * (len(cand) + 1) for _ in range(len(ref) + 1)]
    for i in range(1, len(ref) + 1):
        for j in range(1, len(cand) + 1):
            if ref[i - 1] == cand[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    lcs = table[-1][-1]
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "normal"
    arg = sys.argv[2] if len(sys.argv) > 2 else None

    if mode == "exit":
        return 0
    if mode == "garbage":
        sys.stdout.write("this is not json\n")
        sys.stdout.flush()
        return 0

    lookup = {}
    if mode == "lookup":
        with open(arg, encoding="utf-8") as fh:
            lookup = json.load(fh)
    shuffle_size = int(arg) if mode == "shuffle" and arg else 3
    held = []
    answered = 0

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            emit({"type": "error", "id": 0, "message": "bad request line"})
            continue
        mtype = msg.get("type")
        if mode == "silent":
            continue
        if mtype == "hello":
            if mode == "badready":
                emit({"type": "ready", "name": "mock", "range": [1, 0]})
            else:
                emit({"type": "ready", "name": f"mock-{mode}", "range": [0, 1]})
        elif mtype == "score":
            if mode == "stall":
                continue
            rid = msg["id"]
            reference = msg.get("reference", "")
            candidate = msg.get("candidate", "")
            if mode == "error":
                emit({"type": "error", "id": rid, "message": "scorer exploded"})
                continue
            if mode == "outofrange":
                value = 1.7
            elif mode == "rouge":
                value = rouge_value(reference, candidate)
            elif mode == "lookup":
                key = hashlib.sha256(candidate.encode("utf-8")).hexdigest()
                value = lookup[key]
            else:
                value = text_value(reference, candidate)
            if mode == "shuffle":
                held.append((rid, value))
                if len(held) >= shuffle_size:
                    for hid, hval in reversed(held):
                        emit({"type": "score", "id": hid, "value": hval})
                    held.clear()
                continue
            emit({"type": "score", "id": rid, "value": value})
            answered += 1
            if mode == "die_mid" and answered >= 1:
                return 0
        elif mtype == "shutdown":
            for hid, hval in reversed(held):
                emit({"type": "score", "id": hid, "value": hval})
            return 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
