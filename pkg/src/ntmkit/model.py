"""Neural Turing Machine cell and sequence unrolling.

One feedforward controller, one read head and one write head over an
N x M memory matrix.  All step math is built from the autodiff primitives,
so a whole unrolled sequence is differentiable end to end.

Addressing pipeline per head and step:

    content   w_c[i] = softmax_i(beta * cos(key, memory[i]))
    gate      w_g    = g * w_c + (1 - g) * w_prev
    shift     w_s    = circular_convolve(w_g, s)
    sharpen   w      = w_s ** gamma / sum(w_s ** gamma)

Step order is fixed: controller, then write (erase/add), then read against
the freshly written memory, then output.  The output logits come from the
controller hidden layer alone; the read vector feeds the next step.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CONTENT_EPS = 1e-8


class HeadControls(NamedTuple):
    """Per-step addressing parameters emitted by the controller."""

    key: Tensor            # [M], unconstrained
    beta: Tensor           # scalar >= 0 (softplus)
    gate: Tensor           # scalar in [0, 1] (sigmoid)
    shift: Tensor          # [3], distribution over offsets -1/0/+1 (softmax)
    gamma: Tensor          # scalar >= 1 (oneplus)
    erase: Optional[Tensor] = None   # [M] in [0, 1] (sigmoid), write head only
    add: Optional[Tensor] = None     # [M], unconstrained, write head only


class State(NamedTuple):
    """Recurrent state threaded through the unroll."""

    memory: Tensor     # [N x M]
    w_read: Tensor     # [N]
    w_write: Tensor    # [N]
    read: Tensor       # [M], read vector fed to the next controller step


@dataclass
class StepTrace:
    """Detached per-step record for rendering and inspection."""

    read_weighting: np.ndarray
    write_weighting: np.ndarray
    output: np.ndarray


_READ_CONTROLS = ("key", "beta", "gate", "shift", "gamma")
_WRITE_CONTROLS = _READ_CONTROLS + ("erase", "add")


class NtmModel:
    """All learnable parameters, stored as named leaf tensors.

    Learned initial state: the memory matrix, both initial weightings
    (as unconstrained logits passed through softmax), and the initial
    read vector.
    """

    def __init__(self, input_ch, output_ch, locations=128, width=20, hidden=100,
                 seed=0):
        self.input_ch = int(input_ch)
        self.output_ch = int(output_ch)
        self.locations = int(locations)
        self.width = int(width)
        self.hidden = int(hidden)

        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
        n, m, hdim = self.locations, self.width, self.hidden
        self.params = {}

        def glorot(name, rows, cols):
            limit = np.sqrt(6.0 / (rows + cols))
            self.params[name] = Tensor(rng.uniform(-limit, limit, size=(rows, cols)))

        def zeros(name, *shape):
            self.params[name] = Tensor(np.zeros(shape))

        glorot("controller.W", hdim, self.input_ch + m)
        zeros("controller.b", hdim)

        control_dims = {"key": m, "beta": 1, "gate": 1, "shift": 3, "gamma": 1,
                        "erase": m, "add": m}
        for head, names in (("read", _READ_CONTROLS), ("write", _WRITE_CONTROLS)):
            for ctl in names:
                glorot("%s.W_%s" % (head, ctl), control_dims[ctl], hdim)
                zeros("%s.b_%s" % (head, ctl), control_dims[ctl])

        glorot("output.W", self.output_ch, hdim)
        zeros("output.b", self.output_ch)

        self.params["init.memory"] = Tensor(rng.normal(0.0, 0.1, size=(n, m)))
        # bias the initial focus toward location 0 so location-based
        # addressing has a sharp anchor to walk from
        for name in ("init.read_weighting", "init.write_weighting"):
            logits = np.zeros(n)
            logits[0] = 5.0
            self.params[name] = Tensor(logits)
        zeros("init.read_vector", m)

    def config(self):
        return {
            "input_ch": self.input_ch,
            "output_ch": self.output_ch,
            "locations": self.locations,
            "width": self.width,
            "hidden": self.hidden,
        }

    def n_parameters(self):
        return sum(p.data.size for p in self.params.values())

    def zero_grads(self):
        for p in self.params.values():
            p.zero_grad()

    def grads(self):
        """Gradient arrays aligned with params; missing ones read as zero."""
        out = {}
        for name, p in self.params.items():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            out[name] = p.grad
        return out


# ---------------------------------------------------------------------
# addressing stages
# ---------------------------------------------------------------------

def content_address(memory, key, beta):
    """Similarity-focused weighting: softmax over beta-scaled row cosines."""
    return ad.softmax(ad.mul(beta, ad.cosine_rows(memory, key, CONTENT_EPS)))


def interpolate(w_content, w_prev, gate):
    one = Tensor(1.0)
    return ad.add(ad.mul(gate, w_content), ad.mul(ad.sub(one, gate), w_prev))


def shift(w, s):
    return ad.circular_convolve(w, s)


def sharpen(w, gamma):
    return ad.sharpen(w, gamma)


def address(memory, w_prev, controls):
    """Full addressing pipeline: content, interpolate, shift, sharpen."""
    w = content_address(memory, controls.key, controls.beta)
    w = interpolate(w, w_prev, controls.gate)
    w = shift(w, controls.shift)
    return sharpen(w, controls.gamma)


def read(memory, w):
    """Weighted sum of memory rows: r = sum_i w[i] memory[i]."""
    return ad.vecmat(w, memory)


def write(memory, w, erase, add_vec):
    """memory[i] <- memory[i] * (1 - w[i] * erase) + w[i] * add_vec."""
    one = Tensor(np.ones(memory.data.shape))
    keep = ad.sub(one, ad.outer(w, erase))
    return ad.add(ad.mul(memory, keep), ad.outer(w, add_vec))


# ---------------------------------------------------------------------
# controller and step
# ---------------------------------------------------------------------

def _project(model, head, ctl, hidden):
    p = model.params
    return ad.add(ad.matvec(p["%s.W_%s" % (head, ctl)], hidden),
                  p["%s.b_%s" % (head, ctl)])


def _head_controls(model, head, hidden):
    key = _project(model, head, "key", hidden)
    beta = ad.softplus(_project(model, head, "beta", hidden))
    gate = ad.sigmoid(_project(model, head, "gate", hidden))
    shift_dist = ad.softmax(_project(model, head, "shift", hidden))
    gamma = ad.oneplus(_project(model, head, "gamma", hidden))
    if head == "read":
        return HeadControls(key, beta, gate, shift_dist, gamma)
    erase = ad.sigmoid(_project(model, head, "erase", hidden))
    add_vec = _project(model, head, "add", hidden)
    return HeadControls(key, beta, gate, shift_dist, gamma, erase, add_vec)


def controller_forward(model, x, r_prev):
    """Hidden layer plus head controls and output logits for one step.

    hidden = tanh(W [x || r_prev] + b).  Range-enforcing activations per
    control: key/add linear, beta softplus, gate/erase sigmoid, shift
    softmax, gamma oneplus.
    """
    xr = ad.concat(x, r_prev)
    hidden = ad.tanh(ad.add(ad.matvec(model.params["controller.W"], xr),
                            model.params["controller.b"]))
    read_controls = _head_controls(model, "read", hidden)
    write_controls = _head_controls(model, "write", hidden)
    logits = ad.add(ad.matvec(model.params["output.W"], hidden),
                    model.params["output.b"])
    return read_controls, write_controls, logits


def initial_state(model):
    p = model.params
    return State(
        memory=p["init.memory"],
        w_read=ad.softmax(p["init.read_weighting"]),
        w_write=ad.softmax(p["init.write_weighting"]),
        read=p["init.read_vector"],
    )


def ntm_step(model, state, x):
    """One machine step; returns (new state, output probabilities)."""
    read_controls, write_controls, logits = controller_forward(model, x, state.read)
    w_write = address(state.memory, state.w_write, write_controls)
    memory = write(state.memory, w_write, write_controls.erase, write_controls.add)
    w_read = address(memory, state.w_read, read_controls)
    r = read(memory, w_read)
    y = ad.sigmoid(logits)
    return State(memory, w_read, w_write, r), y


def unroll(model, input_seq):
    """Run the machine over a [T x input_ch] input matrix.

    Returns (outputs, trace): outputs is a [T x output_ch] tensor of
    per-step output probabilities, trace a list of detached StepTrace
    entries, one per step.
    """
    input_seq = np.asarray(input_seq, dtype=np.float64)
    if input_seq.ndim != 2 or input_seq.shape[1] != model.input_ch:
        raise ad.ShapeError(
            "input sequence must be [T x %d], got %r" % (model.input_ch, input_seq.shape)
        )
    state = initial_state(model)
    outputs = []
    trace = []
    for t in range(input_seq.shape[0]):
        state, y = ntm_step(model, state, Tensor(input_seq[t]))
        outputs.append(y)
        trace.append(StepTrace(
            read_weighting=state.w_read.data.copy(),
            write_weighting=state.w_write.data.copy(),
            output=y.data.copy(),
        ))
    return ad.stack_rows(outputs), trace


def expected_parameter_count(input_ch, output_ch, locations, width, hidden):
    """Closed-form parameter count for one read + one write head."""
    controller = hidden * (input_ch + width) + hidden
    per_control = {"key": width, "beta": 1, "gate": 1, "shift": 3, "gamma": 1}
    head = sum(d * hidden + d for d in per_control.values())
    write_extra = 2 * (width * hidden + width)
    output = output_ch * hidden + output_ch
    init = locations * width + 2 * locations + width
    return controller + 2 * head + write_extra + output + init
