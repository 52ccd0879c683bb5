"""Independent reference evaluations for values frozen into the Rust tests.

Run with `python3 tools/oracles/oracles.py`. Nothing here imports or mirrors
the Rust code paths; every value is recomputed from the formulas directly.
"""
import math
from collections import Counter

import mpmath as mp

mp.mp.dps = 40


def tokenize(text):
    out, cur = [], []
    for ch in text:
        if ch.isalnum():
            cur.append(ch.lower())
        elif cur:
            out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


def fnv1a64(s):
    h = 0xCBF29CE484222325
    for b in s.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def ngrams(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def rouge_n(c, r, n):
    c, r = ngrams(tokenize(c), n), ngrams(tokenize(r), n)
    cn, rn = sum(c.values()), sum(r.values())
    if cn == 0 or rn == 0:
        return (0.0, 0.0, 0.0)
    ov = sum(min(v, r[k]) for k, v in c.items())
    p, rec = ov / cn, ov / rn
    f = 2 * p * rec / (p + rec) if p + rec > 0 else 0.0
    return (p, rec, f)


def lcs(a, b):
    best = 0
    # exhaustive over subsequences is too slow; classic table, written out longhand
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            t[i][j] = t[i - 1][j - 1] + 1 if a[i - 1] == b[j - 1] else max(t[i - 1][j], t[i][j - 1])
            best = max(best, t[i][j])
    return best


def rouge_l(c, r):
    c, r = tokenize(c), tokenize(r)
    if not c or not r:
        return (0.0, 0.0, 0.0)
    l = lcs(c, r)
    p, rec = l / len(c), l / len(r)
    f = 2 * p * rec / (p + rec) if p + rec > 0 else 0.0
    return (p, rec, f)


def bleu(c, r, max_n=4, eps=1e-9):
    ct, rt = tokenize(c), tokenize(r)
    if not ct:
        return 0.0
    logs = []
    for n in range(1, max_n + 1):
        cg, rg = ngrams(ct, n), ngrams(rt, n)
        cnt = sum(cg.values())
        ov = sum(min(v, rg[k]) for k, v in cg.items())
        p = (ov + eps) / (cnt + eps) if ov == 0 else ov / cnt
        logs.append(math.log(p))
    bp = min(1.0, math.exp(1 - len(rt) / len(ct)))
    return bp * math.exp(sum(logs) / max_n)


def rouge_sum(c, r):
    f = [rouge_n(c, r, 1)[2], rouge_n(c, r, 2)[2], rouge_l(c, r)[2]]
    return math.exp(sum(f) / 3) - 1


PAIRS = [
    ("a b c", "a b d"),
    ("a b c d", "a c b d"),
    ("the cat sat on", "the cat sat on the mat with joy"),
    ("the quick brown fox jumps over the lazy dog", "the quick brown dog jumps over the lazy fox"),
    ("actor r5 receives consequence p3 under the statute", "under statute s3 actor r5 receives the consequence p3"),
]


def four_token_nll():
    W, E, H, V = 2, 3, 4, 7
    sizes = [("emb", V * E), ("w1", W * E * H), ("b1", H), ("w2", H * V), ("b2", V)]
    flat, i = {}, 0
    for name, n in sizes:
        flat[name] = [mp.mpf(0) if i + k < E else mp.mpf("0.1") * mp.sin(mp.mpf("0.7") * (i + k) + mp.mpf("0.3")) for k in range(n)]
        i += n
    emb = [flat["emb"][t * E:(t + 1) * E] for t in range(V)]
    w1 = [[flat["w1"][a * H + b] for b in range(H)] for a in range(W * E)]
    w2 = [[flat["w2"][a * V + b] for b in range(V)] for a in range(H)]
    prompt, target = [3, 4], [5, 6, 4, 1]
    seq, total = list(prompt), mp.mpf(0)
    for tok in target:
        ctx = ([0] * W + seq)[-W:]
        x = [v for t in ctx for v in emb[t]]
        h = [mp.tanh(flat["b1"][b] + sum(x[a] * w1[a][b] for a in range(W * E))) for b in range(H)]
        y = [flat["b2"][k] + sum(h[j] * w2[j][k] for j in range(H)) for k in range(V)]
        lse = mp.log(sum(mp.e ** v for v in y))
        total += lse - y[tok]
        seq.append(tok)
    return total / len(target)


def main():
    print("== hash buckets (dim 4096)")
    for text in ["alpha beta", "gamma delta"]:
        for t in tokenize(text):
            h = fnv1a64(t)
            print(f"  {t!r}: h={h:#018x} bucket={h % 4096} sign={'-' if h >> 63 else '+'}")

    print("== metric pairs")
    for c, r in PAIRS:
        r1, r2, rl = rouge_n(c, r, 1), rouge_n(c, r, 2), rouge_l(c, r)
        print(f"  cand={c!r} ref={r!r}")
        print(f"    rouge1={r1!r}")
        print(f"    rouge2={r2!r}")
        print(f"    rougeL={rl!r}")
        print(f"    bleu={bleu(c, r)!r}")
        print(f"    rouge_sum={rouge_sum(c, r)!r}")
    print("  exp(4/9)-1 =", mp.e ** (mp.mpf(4) / 9) - 1)

    print("== bm25")
    idf = mp.log((3 - 1 + mp.mpf("0.5")) / (1 + mp.mpf("0.5")) + 1)
    print("  idf(df=1,N=3) =", idf)
    for tf in (1, 2):
        k1 = mp.mpf("1.2")
        print(f"  tf={tf} len=avg score =", idf * (tf * (k1 + 1)) / (tf + k1))

    print("== kl(uniform4 || softmax([10,0,0,0]))")
    z = mp.e ** 10 + 3
    q = [mp.e ** 10 / z, 1 / z, 1 / z, 1 / z]
    print("  ", sum(mp.mpf("0.25") * mp.log(mp.mpf("0.25") / qi) for qi in q))

    print("== shaped rewards")
    kls, term, beta = [0.1, 0.2, 0.3], 2.0, 0.02
    print("  ", [-beta * k for k in kls[:-1]] + [term - beta * kls[-1]])

    print("== gae T=3, gamma=0.9, lambda=0.8")
    r, v, g, lam = [0.5, -0.2, 1.0], [0.3, 0.1, 0.4], 0.9, 0.8
    vn = v[1:] + [0.0]
    delta = [r[t] + g * vn[t] - v[t] for t in range(3)]
    adv = [sum((g * lam) ** k * delta[t + k] for k in range(3 - t)) for t in range(3)]
    print("  delta =", delta)
    print("  adv =", adv)
    print("  ret =", [adv[t] + v[t] for t in range(3)])

    print("== clipped surrogate (eps=0.2)")
    steps = [(0.3, 1.0), (-0.1, -2.0)]  # (logp_new - logp_old, advantage)
    vals = []
    for d, a in steps:
        rho = mp.e ** d
        clipped = min(max(rho, mp.mpf("0.8")), mp.mpf("1.2"))
        vals.append(min(rho * a, clipped * a))
    print("  terms =", vals, "mean =", sum(vals) / 2)

    print("== four-token NLL, W=2 E=3 H=4 V=7, p[i] = 0.1 sin(0.7 i + 0.3), PAD row zero")
    print("  ", four_token_nll())

    print("== reward perfect item: e + 1 =", mp.e + 1, " e - 1 =", mp.e - 1)


if __name__ == "__main__":
    main()
