"""JIT-compiled scan kernels for packed binary codes.

Codes are viewed as little-endian uint64 words (rows padded with zero bytes
up to a whole word, which cannot change XOR/AND/OR popcounts). Each kernel
fuses the distance computation with bounded top-k selection under the
(distance, row id) total order, so a scan makes a single pass over the
candidate words and never materializes a distance array.

The popcount goes through the LLVM ctpop intrinsic; on AVX-512 hosts the
loop vectorizes to hardware VPOPCNTQ.
"""
from __future__ import annotations

import numpy as np
from llvmlite import ir
from numba import int64, njit, uint64
from numba.extending import intrinsic


@intrinsic
def _popcount64(typingctx, src):
    """Number of set bits in a uint64, via llvm.ctpop.i64."""
    sig = uint64(uint64)

    def codegen(context, builder, signature, args):
        ctpop = builder.module.declare_intrinsic("llvm.ctpop", [ir.IntType(64)])
        return builder.call(ctpop, args)

    return sig, codegen


@njit(cache=True)
def hamming_topk(words, starts, ends, qwords, row_ids, k, out_ids, out_dists):
    """Scan row ranges of `words`, keeping the k best by (hamming, row id).

    `out_ids`/`out_dists` must hold at least k slots; returns how many were
    filled (less than k when the ranges hold fewer rows). Results are sorted
    ascending under the total order.

    Runs in two phases: a branch-free distance fill, then selection through
    a distance histogram. Hamming values are small integers (at most 64 per
    word), so the histogram pins the k-th distance and the only per-item
    work at the boundary is picking the smallest row ids among the ties.
    """
    nwords = words.shape[1]
    nranges = starts.shape[0]
    total = 0
    for r in range(nranges):
        total += ends[r] - starts[r]
    if total == 0:
        return 0

    dist_buf = np.empty(total, dtype=np.int64)
    idx = 0
    for r in range(nranges):
        for pos in range(starts[r], ends[r]):
            d = int64(0)
            for w in range(nwords):
                d += int64(_popcount64(words[pos, w] ^ qwords[w]))
            dist_buf[idx] = d
            idx += 1

    if total <= k:
        # small candidate set: insertion sort everything by (distance, id)
        count = 0
        idx = 0
        for r in range(nranges):
            for pos in range(starts[r], ends[r]):
                d = dist_buf[idx]
                rid = row_ids[pos]
                idx += 1
                j = count
                while j > 0 and (out_dists[j - 1] > d or (out_dists[j - 1] == d and out_ids[j - 1] > rid)):
                    out_dists[j] = out_dists[j - 1]
                    out_ids[j] = out_ids[j - 1]
                    j -= 1
                out_dists[j] = d
                out_ids[j] = rid
                count += 1
        return count

    # histogram over the possible distance values [0, 64 * nwords]
    hist = np.zeros(64 * nwords + 2, dtype=np.int64)
    for i in range(total):
        hist[dist_buf[i]] += 1
    cum = int64(0)
    threshold = int64(0)
    for v in range(hist.shape[0]):
        cum += hist[v]
        if cum >= k:
            threshold = int64(v)
            break
    below = cum - hist[threshold]  # strictly closer than the boundary
    need = k - below  # boundary slots, filled by smallest row ids

    # collect sure winners unsorted, and the `need` smallest boundary ids
    lt_ids = np.empty(k, dtype=np.int64)
    lt_dists = np.empty(k, dtype=np.int64)
    tie_ids = np.empty(need, dtype=np.int64)
    nlt = 0
    ntie = 0
    idx = 0
    for r in range(nranges):
        for pos in range(starts[r], ends[r]):
            d = dist_buf[idx]
            idx += 1
            if d > threshold:
                continue
            if d < threshold:
                lt_ids[nlt] = row_ids[pos]
                lt_dists[nlt] = d
                nlt += 1
            else:
                rid = row_ids[pos]
                if ntie < need:
                    j = ntie
                    while j > 0 and tie_ids[j - 1] > rid:
                        tie_ids[j] = tie_ids[j - 1]
                        j -= 1
                    tie_ids[j] = rid
                    ntie += 1
                elif rid < tie_ids[need - 1]:
                    j = need - 1
                    while j > 0 and tie_ids[j - 1] > rid:
                        tie_ids[j] = tie_ids[j - 1]
                        j -= 1
                    tie_ids[j] = rid

    # merge: insertion-sort the sure winners, append boundary ties
    count = 0
    for i in range(nlt):
        d = lt_dists[i]
        rid = lt_ids[i]
        j = count
        while j > 0 and (out_dists[j - 1] > d or (out_dists[j - 1] == d and out_ids[j - 1] > rid)):
            out_dists[j] = out_dists[j - 1]
            out_ids[j] = out_ids[j - 1]
            j -= 1
        out_dists[j] = d
        out_ids[j] = rid
        count += 1
    for i in range(ntie):
        out_dists[count] = threshold
        out_ids[count] = tie_ids[i]
        count += 1
    return count


@njit(cache=True)
def jaccard_topk(words, starts, ends, qwords, row_ids, k, out_ids, out_dists):
    """Same contract as :func:`hamming_topk` for the Jaccard distance.

    Distance is 1 - |AND| / |OR|, with the two-empty-codes case defined as 0.
    """
    nwords = words.shape[1]
    count = 0
    worst = 3.0
    for r in range(starts.shape[0]):
        for pos in range(starts[r], ends[r]):
            inter = int64(0)
            union = int64(0)
            for w in range(nwords):
                qw = qwords[w]
                cw = words[pos, w]
                inter += int64(_popcount64(cw & qw))
                union += int64(_popcount64(cw | qw))
            if union == 0:
                d = 0.0
            else:
                d = 1.0 - inter / union
            if count < k:
                rid = row_ids[pos]
                j = count
                while j > 0 and (out_dists[j - 1] > d or (out_dists[j - 1] == d and out_ids[j - 1] > rid)):
                    out_dists[j] = out_dists[j - 1]
                    out_ids[j] = out_ids[j - 1]
                    j -= 1
                out_dists[j] = d
                out_ids[j] = rid
                count += 1
                worst = out_dists[count - 1]
            elif d < worst or (d == worst and row_ids[pos] < out_ids[count - 1]):
                rid = row_ids[pos]
                j = count - 1
                while j > 0 and (out_dists[j - 1] > d or (out_dists[j - 1] == d and out_ids[j - 1] > rid)):
                    out_dists[j] = out_dists[j - 1]
                    out_ids[j] = out_ids[j - 1]
                    j -= 1
                out_dists[j] = d
                out_ids[j] = rid
                worst = out_dists[count - 1]
    return count


def packed_to_words(packed: np.ndarray) -> np.ndarray:
    """View packed uint8 rows as uint64 words, zero-padding to whole words.

    Pad bytes are zero so they never contribute to popcounts.
    """
    n, row_bytes = packed.shape
    nwords = (row_bytes + 7) // 8
    if row_bytes == nwords * 8:
        padded = np.ascontiguousarray(packed)
    else:
        padded = np.zeros((n, nwords * 8), dtype=np.uint8)
        padded[:, :row_bytes] = packed
    return padded.view("<u8")


def query_to_words(query: np.ndarray) -> np.ndarray:
    """uint64 word view of one packed query row."""
    return packed_to_words(query.reshape(1, -1))[0]
