#!/usr/bin/env python3
"""Writes a 14-class score file plus metric values computed by brute force.

Scores are multiples of 1/20 so tie groups are common. AUC is computed over
all positive/negative pairs, AP rank group by rank group.
"""
import json
import random
import sys
from pathlib import Path

CLASSES = 13


def pairwise_auc(s, y):
    pos = [a for a, l in zip(s, y) if l]
    neg = [a for a, l in zip(s, y) if not l]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def sweep_ap(s, y):
    P = sum(y)
    ap, prev_recall = 0.0, 0.0
    for thr in sorted(set(s), reverse=True):
        kept = [l for a, l in zip(s, y) if a >= thr]
        tp = sum(kept)
        recall = tp / P
        ap += (recall - prev_recall) * (tp / len(kept))
        prev_recall = recall
    return ap


def main(out_dir):
    rng = random.Random(2024)
    records = []
    for v in range(8):
        label = 0 if v < 3 else rng.randint(1, CLASSES)
        start = rng.randint(5, 20)
        for t in range(40):
            gt = label if label and start <= t < start + 12 else 0
            w = [rng.randint(0, 3) for _ in range(CLASSES + 1)]
            w[0] += 6
            if gt:
                w[gt] += rng.randint(2, 8)
            unit = 20 / sum(w)
            q = [round(x * unit) for x in w]
            q[0] += 20 - sum(q)
            if q[0] < 0:
                q[gt or 1] += q[0]
                q[0] = 0
            scores = [x / 20 for x in q]
            records.append({"video_id": f"vid_{v:02d}", "frame_index": t, "scores": scores, "label": gt})

    def p_a(r):
        a = 0.0
        for x in r["scores"][1:]:
            a += x
        return a

    pa = [p_a(r) for r in records]
    y = [1 if r["label"] else 0 for r in records]
    expected = {"vad_auc": pairwise_auc(pa, y), "vad_ap": sweep_ap(pa, y), "classes": {}}
    aucs, aps = [], []
    for c in range(1, CLASSES + 1):
        yc = [1 if r["label"] == c else 0 for r in records]
        if not any(yc):
            continue
        sc = [r["scores"][c] for r in records]
        auc, ap = pairwise_auc(sc, yc), sweep_ap(sc, yc)
        expected["classes"][str(c)] = {"auc": auc, "ap": ap}
        aucs.append(auc)
        aps.append(ap)
    expected["mauc"] = sum(aucs) / len(aucs)
    expected["map"] = sum(aps) / len(aps)
    expected["frames"] = len(records)
    expected["videos"] = 8

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ucf_scores.jsonl", "w") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    with open(out / "ucf_scores.expected.json", "w") as f:
        json.dump(expected, f, indent=2)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/eval")
