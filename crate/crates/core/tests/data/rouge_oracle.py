"""Independent ROUGE / duplicate-count oracle for rouge_fixture.jsonl.

Brute-force formulations on purpose: n-gram overlap by explicit clipping of
Counter intersections, LCS by enumerating subsequences of the shorter side.
Writes rouge_expected.json next to this file.
"""
import itertools
import json
import os
from collections import Counter

HERE = os.path.dirname(os.path.abspath(__file__))


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def is_subsequence(sub, seq):
    it = iter(seq)
    return all(any(x == y for y in it) for x in sub)


def lcs_brute(a, b):
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    for k in range(len(short), 0, -1):
        for idx in itertools.combinations(range(len(short)), k):
            if is_subsequence([short[i] for i in idx], long_):
                return k
    return 0


def score(overlap, c, r):
    if c == 0 or r == 0:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    p = overlap / c
    rec = overlap / r
    f1 = 2.0 * p * rec / (p + rec) if p + rec > 0 else 0.0
    return {"precision": p, "recall": rec, "f1": f1}


def main():
    rows = []
    with open(os.path.join(HERE, "rouge_fixture.jsonl")) as f:
        for line in f:
            rec = json.loads(line)
            c = rec["predicted_voice"].split()
            r = rec["reference_voice"].split()
            row = {}
            for n in (1, 2):
                cg, rg = ngrams(c, n), ngrams(r, n)
                overlap = sum((cg & rg).values())
                row[f"rouge{n}_counts"] = [overlap, sum(cg.values()), sum(rg.values())]
                row[f"rouge{n}"] = score(overlap, sum(cg.values()), sum(rg.values()))
            lcs = lcs_brute(c, r)
            row["lcs"] = lcs
            row["rougel"] = score(lcs, len(c), len(r))
            counts = Counter(c)
            row["duplicates"] = sum(v - 1 for v in counts.values())
            rc = Counter(r)
            row["duplicates_vs_reference"] = sum(max(0, v - max(rc[w], 1)) for w, v in counts.items())
            rows.append(row)
    n = len(rows)
    mean = {}
    for key in ("rouge1", "rouge2", "rougel"):
        total = 0.0
        for row in rows:
            total += row[key]["f1"]
        mean[key] = total / n
    for key in ("duplicates", "duplicates_vs_reference"):
        total = 0.0
        for row in rows:
            total += float(row[key])
        mean[key] = total / n
    with open(os.path.join(HERE, "rouge_expected.json"), "w") as f:
        json.dump({"examples": rows, "means": mean}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
