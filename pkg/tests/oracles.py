"""Independent reference implementations used to check the package.

Everything here is written in the most literal way possible (python
loops, math.exp/log) and deliberately shares no code with the package
internals beyond numpy arrays at the boundary.
"""

import math

import numpy as np


def normalize_rows_oracle(rows, eps=1e-12):
    rows = np.asarray(rows, dtype=np.float64)
    out = np.zeros_like(rows)
    for i in range(rows.shape[0]):
        n = math.sqrt(float((rows[i] * rows[i]).sum()))
        if n >= eps:
            out[i] = rows[i] / n
    return out


def cross_entropy_oracle(logits, labels, class_subset):
    """Mean NLL over the restricted softmax, one sample at a time."""
    logits = np.asarray(logits, dtype=np.float64)
    subset = sorted(set(int(c) for c in class_subset))
    losses = []
    for i, label in enumerate(labels):
        scores = [logits[i, c] for c in subset]
        m = max(scores)
        lse = m + math.log(sum(math.exp(s - m) for s in scores))
        losses.append(lse - logits[i, int(label)])
    return sum(losses) / len(losses)


def sup_con_oracle(projections, labels, temperature):
    """Anchor-by-anchor supervised contrastive loss."""
    q = normalize_rows_oracle(projections)
    n = q.shape[0]
    anchor_losses = []
    for i in range(n):
        positives = [p for p in range(n) if p != i and labels[p] == labels[i]]
        if not positives:
            continue
        denom = sum(math.exp(float(q[i] @ q[j]) / temperature) for j in range(n) if j != i)
        terms = []
        for p in positives:
            numer = math.exp(float(q[i] @ q[p]) / temperature)
            terms.append(-math.log(numer / denom))
        anchor_losses.append(sum(terms) / len(terms))
    if not anchor_losses:
        return 0.0
    return sum(anchor_losses) / len(anchor_losses)


def rsd_oracle(aligned, student_index):
    """Distillation value: mean L2 between normalized student and each
    normalized teacher, summed over teachers. student_index is 1-based."""
    n = len(aligned)
    s = student_index - 1
    student = normalize_rows_oracle(aligned[s])
    total = 0.0
    for t in range(n):
        if t == s:
            continue
        teacher = normalize_rows_oracle(aligned[t])
        dists = [math.sqrt(float(((teacher[b] - student[b]) ** 2).sum())) for b in range(student.shape[0])]
        total += sum(dists) / len(dists)
    return total


def acc_af_oracle(matrix):
    """Spreadsheet-style: vectorized over the full (T, T) array."""
    values = np.asarray(matrix, dtype=np.float64)
    task_count = values.shape[0]
    acc = values[:, -1].mean()
    if task_count == 1:
        return float(acc), 0.0
    best_earlier = np.array([values[t, t:task_count - 1].max() for t in range(task_count - 1)])
    af = (best_earlier - values[:task_count - 1, -1]).mean()
    return float(acc), float(af)


def ncm_oracle(feature, classes, means):
    """Exhaustive nearest-mean with smallest-id tie break."""
    feature = np.asarray(feature, dtype=np.float64)
    n = math.sqrt(float((feature * feature).sum()))
    q = feature / n if n >= 1e-12 else np.zeros_like(feature)
    best_class, best_dist = None, None
    for c, m in sorted(zip(classes, means), key=lambda cm: cm[0]):
        d = math.sqrt(float(((q - m) ** 2).sum()))
        if best_dist is None or d < best_dist - 1e-15 or (abs(d - best_dist) <= 1e-15 and c < best_class):
            best_class, best_dist = c, d
    return int(best_class)


def finite_difference_gradients(params, forward, h=1e-6):
    """Central finite differences of scalar forward() w.r.t. each
    parameter tensor (list of Tensor-likes with .data ndarrays)."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + h
            up = forward()
            flat[k] = original - h
            down = forward()
            flat[k] = original
            gflat[k] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(analytic, numeric):
    """Max elementwise |a - n| / max(1, |a|, |n|) over parameter lists."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
