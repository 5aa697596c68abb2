"""Independent extended-precision forward pass used as a gradient oracle.

Re-implements the machine's step math directly in numpy longdouble, sharing
no code with the library.  Central finite differences computed through this
path have ~1e3x less roundoff than a float64 evaluation, which matters when
checking tiny gradient components of an unrolled sequence loss.
"""

import numpy as np

LD = np.longdouble


def _sigmoid(x):
    return 0.5 * (1 + np.tanh(0.5 * x))


def _softmax(x):
    z = np.exp(x - x.max())
    return z / z.sum()


def _cosine_rows(mem, key, eps):
    dots = mem @ key
    row_norms = np.sqrt((mem * mem).sum(axis=1))
    key_norm = np.sqrt((key * key).sum())
    return dots / (row_norms * key_norm + eps)


def _convolve(w, s):
    out = np.zeros_like(w)
    for j, off in enumerate(range(-(len(s) // 2), len(s) // 2 + 1)):
        out += s[j] * np.roll(w, off)
    return out


def _address(mem, w_prev, key, beta, gate, shift_dist, gamma, eps):
    w = _softmax(beta * _cosine_rows(mem, key, eps))
    w = gate * w + (1 - gate) * w_prev
    w = _convolve(w, shift_dist)
    p = w ** gamma
    return p / p.sum()


def _controls(params, head, hidden):
    def proj(ctl):
        return params["%s.W_%s" % (head, ctl)] @ hidden + params["%s.b_%s" % (head, ctl)]

    key = proj("key")
    beta = np.logaddexp(LD(0.0), proj("beta"))[0]
    gate = _sigmoid(proj("gate"))[0]
    shift_dist = _softmax(proj("shift"))
    gamma = 1 + np.logaddexp(LD(0.0), proj("gamma"))[0]
    if head == "read":
        return key, beta, gate, shift_dist, gamma, None, None
    return key, beta, gate, shift_dist, gamma, _sigmoid(proj("erase")), proj("add")


def sequence_loss(params, input_seq, target, mask, eps=1e-8, clamp=1e-12):
    """Unrolled masked binary cross-entropy (nats), all in longdouble."""
    params = {name: np.asarray(p, dtype=LD) for name, p in params.items()}
    input_seq = np.asarray(input_seq, dtype=LD)
    target = np.asarray(target, dtype=LD)

    mem = params["init.memory"]
    w_read = _softmax(params["init.read_weighting"])
    w_write = _softmax(params["init.write_weighting"])
    read_vec = params["init.read_vector"]

    loss = LD(0.0)
    for t in range(input_seq.shape[0]):
        xr = np.concatenate([input_seq[t], read_vec])
        hidden = np.tanh(params["controller.W"] @ xr + params["controller.b"])
        rk, rb, rg, rs, rgam, _, _ = _controls(params, "read", hidden)
        wk, wb, wg, ws, wgam, erase, add_vec = _controls(params, "write", hidden)

        w_write = _address(mem, w_write, wk, wb, wg, ws, wgam, eps)
        mem = mem * (1 - np.outer(w_write, erase)) + np.outer(w_write, add_vec)
        w_read = _address(mem, w_read, rk, rb, rg, rs, rgam, eps)
        read_vec = w_read @ mem

        y = _sigmoid(params["output.W"] @ hidden + params["output.b"])
        if mask[t]:
            y = np.clip(y, LD(clamp), LD(1.0) - LD(clamp))
            row = target[t]
            loss -= (row * np.log(y) + (1 - row) * np.log(1 - y)).sum()
    return loss


def fd_gradients(params, input_seq, target, mask, h=1e-5):
    """Central-difference gradients of the longdouble loss per parameter."""
    work = {name: np.asarray(p, dtype=LD).copy() for name, p in params.items()}
    grads = {}
    for name, arr in work.items():
        grad = np.zeros(arr.shape, dtype=LD)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + LD(h)
            fp = sequence_loss(work, input_seq, target, mask)
            flat[i] = orig - LD(h)
            fm = sequence_loss(work, input_seq, target, mask)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * LD(h))
        grads[name] = grad
    return grads
