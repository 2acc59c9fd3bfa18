"""Compiled inner loops.

Every kernel takes pre-drawn uniforms instead of owning a generator, so a
Philox stream on the Python side fully determines the outcome. Kernels
release the GIL; independent runs can share read-only matrix buffers
across threads.
"""
import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def descend(tree, cap, u):
    """Walk a heap-ordered sum tree from the root to a leaf.

    ``u`` is uniform on [0, 1). A draw that lands exactly on a boundary
    goes right; a subtree of zero weight is never entered.
    """
    node = 1
    target = u * tree[1]
    while node < cap:
        left = tree[2 * node]
        right = tree[2 * node + 1]
        if right <= 0.0 or (target < left and left > 0.0):
            node = 2 * node
        else:
            target -= left
            node = 2 * node + 1
    return node - cap


@nb.njit(cache=True, nogil=True)
def descend_many(tree, cap, us):
    out = np.empty(us.shape[0], dtype=np.int64)
    for k in range(us.shape[0]):
        out[k] = descend(tree, cap, us[k])
    return out


@nb.njit(cache=True, nogil=True)
def descend_rows(trees, cap, rows, us):
    out = np.empty(us.shape[0], dtype=np.int64)
    for k in range(us.shape[0]):
        out[k] = descend(trees[rows[k]], cap, us[k])
    return out


@nb.njit(cache=True, nogil=True)
def _sq_err(values, v, supp, nnz, xstar, scratch):
    scratch[:] = 0.0
    for q in range(nnz):
        i = supp[q]
        vi = v[i]
        if vi != 0.0:
            for j in range(values.shape[1]):
                scratch[j] += values[i, j] * vi
    err = 0.0
    for j in range(values.shape[1]):
        d = scratch[j] - xstar[j]
        err += d * d
    return err


@nb.njit(cache=True, nogil=True)
def sgd_chunk(values, row_trees, cap, row_tree, row_cap, fro_sq, row_sq,
              v, supp, in_supp, nnz, bhat_idx, bhat_val, b_vals, kaczmarz,
              eta, lam, C, u_rows, u_cols, t0,
              nnz_trace, log_times, log_pos, xstar, err_out, scratch,
              rec_r, rec_c, record):
    """Run ``len(u_rows)`` SGD iterations on the coefficient vector in place.

    Returns ``(nnz, matrix_queries, log_pos)``. ``nnz_trace[t]`` receives the
    support size after iteration t; error samples are taken after the
    iteration whose index matches the next entry of ``log_times``.
    """
    queries = 0
    decay = 1.0 - eta * lam
    for k in range(u_rows.shape[0]):
        t = t0 + k
        r = descend(row_tree, row_cap, u_rows[k])
        acc = 0.0
        for j in range(C):
            c = descend(row_trees[r], cap, u_cols[k, j])
            arc = values[r, c]
            if arc == 0.0:
                raise ValueError("sampled a zero entry")
            ip = 0.0
            for q in range(nnz):
                i = supp[q]
                ip += values[i, c] * v[i]
            acc += ip / arc
            queries += 1 + nnz
            if record:
                rec_c[k, j] = c
        if record:
            rec_r[k] = r
        grad_r = fro_sq * acc / C
        if decay != 1.0:
            for q in range(nnz):
                v[supp[q]] *= decay
        if kaczmarz:
            grad_r -= fro_sq / row_sq[r] * b_vals[r]
        else:
            for q in range(bhat_idx.shape[0]):
                v[bhat_idx[q]] += eta * bhat_val[q]
        if not in_supp[r]:
            in_supp[r] = True
            supp[nnz] = r
            nnz += 1
        v[r] -= eta * grad_r
        nnz_trace[t + 1] = nnz
        if log_pos < log_times.shape[0] and log_times[log_pos] == t + 1:
            err_out[log_pos] = _sq_err(values, v, supp, nnz, xstar, scratch)
            log_pos += 1
    return nnz, queries, log_pos


@nb.njit(cache=True, nogil=True)
def reject_run(values, row_trees, cap, supp, coef, w_tree, w_cap, us,
               out, n_out, want, carry, max_trials):
    """Rejection-sampling trials for x = A^T v restricted to ``supp``.

    With ``want >= 0`` accepted column indices are written to ``out`` until
    ``n_out`` reaches ``want``; with ``want < 0`` every uniform triple is
    consumed and only accepts are counted. ``carry`` is the number of failed
    trials already spent on the current sample. Returns
    ``(n_out, trials, carry, failed)``.
    """
    s = supp.shape[0]
    trials = 0
    cur = carry
    for k in range(us.shape[0]):
        if want >= 0 and n_out >= want:
            break
        trials += 1
        cur += 1
        kk = descend(w_tree, w_cap, us[k, 0])
        j = descend(row_trees[supp[kk]], cap, us[k, 1])
        xj = 0.0
        den = 0.0
        for q in range(s):
            a = values[supp[q], j] * coef[q]
            xj += a
            den += a * a
        if us[k, 2] * s * den < xj * xj:
            if want >= 0:
                out[n_out] = j
            n_out += 1
            cur = 0
        elif max_trials > 0 and cur >= max_trials:
            return n_out, trials, cur, True
    return n_out, trials, cur, False
