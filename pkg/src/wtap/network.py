"""Residual fully-connected regression network, trained from scratch.

The trunk alternates affine layers with PReLU activations; selected
single-layer blocks carry an identity-width shortcut that passes the
block input through its own PReLU and adds it back at the block output.
Two shipped variants:

* deepnet   — 7 affine layers, 9 PReLUs (5 trunk + 4 shortcut), 4 adds.
* deepernet — 11 affine layers, 17 PReLUs (9 trunk + 8 shortcut), 8 adds.

Training is plain mini-batch Adam on mean squared error, deterministic
for a fixed seed. Checkpoints are a little-endian binary format with a
bit-exact round trip (optimizer state included).
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataFormatError, ShapeError, TrainingDiverged

CHECKPOINT_MAGIC = b"WTNN"
CHECKPOINT_VERSION = 1
_VARIANT_CODES = {"custom": 0, "deepnet": 1, "deepernet": 2}
_VARIANT_NAMES = {v: k for k, v in _VARIANT_CODES.items()}

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
PRELU_INIT_SLOPE = 0.25


@dataclass(frozen=True)
class NetArchitecture:
    """Static shape of the network.

    layer_widths has one entry more than there are affine layers;
    activations flags which affine layers are followed by a trunk PReLU;
    shortcut_spans lists inclusive (first, last) affine-index ranges each
    bypassed by a PReLU shortcut (block input and output widths must
    match).
    """

    layer_widths: tuple
    activations: tuple
    shortcut_spans: tuple = ()
    variant: str = "custom"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        acts = tuple(bool(a) for a in self.activations)
        spans = tuple((int(a), int(b)) for a, b in self.shortcut_spans)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ContractError(f"bad layer widths {widths}")
        n = len(widths) - 1
        if len(acts) != n:
            raise ContractError(f"need {n} activation flags, got {len(acts)}")
        prev_end = -1
        for a, b in spans:
            if not (0 <= a <= b < n):
                raise ContractError(f"span ({a},{b}) outside the {n} affine layers")
            if a <= prev_end:
                raise ContractError("shortcut spans must be disjoint and ascending")
            if widths[a] != widths[b + 1]:
                raise ContractError(
                    f"span ({a},{b}) connects unequal widths {widths[a]} vs {widths[b+1]}"
                )
            prev_end = b
        if self.variant not in _VARIANT_CODES:
            raise ContractError(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "activations", acts)
        object.__setattr__(self, "shortcut_spans", spans)

    @property
    def n_affine(self):
        return len(self.layer_widths) - 1

    @property
    def n_prelu(self):
        return sum(self.activations) + len(self.shortcut_spans)

    @property
    def in_dim(self):
        return self.layer_widths[0]

    @property
    def out_dim(self):
        return self.layer_widths[-1]

    @classmethod
    def deepnet(cls, in_dim=72, out_dim=6, width=128):
        return cls(
            layer_widths=(in_dim,) + (width,) * 6 + (out_dim,),
            activations=(True,) * 5 + (False,) * 2,
            shortcut_spans=tuple((i, i) for i in range(1, 5)),
            variant="deepnet",
        )

    @classmethod
    def deepernet(cls, in_dim=72, out_dim=6, width=128):
        return cls(
            layer_widths=(in_dim,) + (width,) * 10 + (out_dim,),
            activations=(True,) * 9 + (False,) * 2,
            shortcut_spans=tuple((i, i) for i in range(1, 9)),
            variant="deepernet",
        )


def param_layout(arch: NetArchitecture):
    """Ordered (name, shape) pairs; serialization and Adam follow it."""
    layout = []
    w = arch.layer_widths
    for i in range(arch.n_affine):
        layout.append((f"w{i}", (w[i + 1], w[i])))
        layout.append((f"b{i}", (w[i + 1],)))
    for i in range(arch.n_affine):
        if arch.activations[i]:
            layout.append((f"a{i}", (w[i + 1],)))
    for k, (start, _end) in enumerate(arch.shortcut_spans):
        layout.append((f"s{k}", (w[start],)))
    return layout


class NetworkParams:
    """All trainable tensors plus Adam state, keyed by layout name."""

    def __init__(self, arch, tensors, m=None, v=None, step=0):
        self.arch = arch
        layout = param_layout(arch)
        for name, shape in layout:
            if name not in tensors:
                raise ShapeError(f"missing parameter {name}")
            if tensors[name].shape != shape:
                raise ShapeError(
                    f"parameter {name} has shape {tensors[name].shape}, want {shape}"
                )
        self.tensors = {n: np.ascontiguousarray(tensors[n], dtype=np.float64)
                        for n, _ in layout}
        zeros = lambda: {n: np.zeros(s) for n, s in layout}
        self.m = m if m is not None else zeros()
        self.v = v if v is not None else zeros()
        self.step = int(step)

    @classmethod
    def initialize(cls, arch, rng):
        """Fan-in-scaled uniform weights, zero biases, PReLU slopes 0.25."""
        tensors = {}
        w = arch.layer_widths
        for i in range(arch.n_affine):
            bound = 1.0 / np.sqrt(w[i])
            tensors[f"w{i}"] = rng.uniform(-bound, bound, size=(w[i + 1], w[i]))
            tensors[f"b{i}"] = np.zeros(w[i + 1])
        for i in range(arch.n_affine):
            if arch.activations[i]:
                tensors[f"a{i}"] = np.full(w[i + 1], PRELU_INIT_SLOPE)
        for k, (start, _end) in enumerate(arch.shortcut_spans):
            tensors[f"s{k}"] = np.full(w[start], PRELU_INIT_SLOPE)
        return cls(arch, tensors)

    def copy(self):
        return NetworkParams(
            self.arch,
            {k: t.copy() for k, t in self.tensors.items()},
            m={k: t.copy() for k, t in self.m.items()},
            v={k: t.copy() for k, t in self.v.items()},
            step=self.step,
        )


def prelu(x, slopes):
    """x where positive, slopes*x otherwise (slopes broadcast per feature)."""
    x = np.asarray(x)
    return np.where(x > 0, x, slopes * x)


def _span_maps(arch):
    starts = {a: k for k, (a, _b) in enumerate(arch.shortcut_spans)}
    ends = {b: k for k, (_a, b) in enumerate(arch.shortcut_spans)}
    return starts, ends


def _forward_cached(params, x):
    """Forward pass keeping what backprop needs: per-layer inputs,
    pre-activations, and the tensors saved at shortcut starts."""
    arch = params.arch
    t = params.tensors
    starts, ends = _span_maps(arch)
    h = x
    inputs, preacts, saved = [], [], {}
    for i in range(arch.n_affine):
        if i in starts:
            saved[starts[i]] = h
        inputs.append(h)
        z = h @ t[f"w{i}"].T + t[f"b{i}"]
        preacts.append(z)
        out = prelu(z, t[f"a{i}"]) if arch.activations[i] else z
        if i in ends:
            k = ends[i]
            out = out + prelu(saved[k], t[f"s{k}"])
        h = out
    return h, (inputs, preacts, saved)


def forward(params: NetworkParams, x) -> np.ndarray:
    """Map feature vectors to raw covariance vectors (no output
    activation). Accepts a single vector or a (batch, in_dim) matrix."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != params.arch.in_dim:
        raise ShapeError(
            f"input shape {x.shape} incompatible with in_dim={params.arch.in_dim}"
        )
    out, _ = _forward_cached(params, x2)
    return out[0] if single else out


def _backprop(params, x, dout):
    """Gradients for every tensor given upstream d(loss)/d(output)."""
    arch = params.arch
    t = params.tensors
    starts, ends = _span_maps(arch)
    _out, (inputs, preacts, saved) = _forward_cached(params, x)
    grads = {}
    d = dout
    d_saved = {}
    for i in reversed(range(arch.n_affine)):
        if i in ends:
            k = ends[i]
            z = saved[k]
            grads[f"s{k}"] = (np.where(z > 0, 0.0, z) * d).sum(axis=0)
            d_saved[k] = d * np.where(z > 0, 1.0, t[f"s{k}"])
        if arch.activations[i]:
            z = preacts[i]
            grads[f"a{i}"] = (np.where(z > 0, 0.0, z) * d).sum(axis=0)
            d = d * np.where(z > 0, 1.0, t[f"a{i}"])
        grads[f"w{i}"] = d.T @ inputs[i]
        grads[f"b{i}"] = d.sum(axis=0)
        d = d @ t[f"w{i}"]
        if i in starts:
            d = d + d_saved[starts[i]]
    return grads


def backward(params: NetworkParams, x, target):
    """Exact gradients of the half squared error 0.5*||forward(x) - target||^2
    (summed over a batch if 2-D inputs are given) for every parameter,
    PReLU slopes included."""
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    t2 = target[None, :] if single else target
    out, _ = _forward_cached(params, x2)
    if out.shape != t2.shape:
        raise ShapeError(f"target shape {target.shape} does not match output")
    return _backprop(params, x2, out - t2)


def adam_step(params: NetworkParams, grads, lr,
              beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """Standard bias-corrected Adam update, in place."""
    params.step += 1
    t = params.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, _shape in param_layout(params.arch):
        g = grads[name]
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params.tensors[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass(frozen=True)
class TrainSchedule:
    """Learning-rate plan and batching. The learning rate starts at
    lr_init and is multiplied by lr_decay after every decay_interval
    epochs. When steps_per_epoch is None an epoch is one pass over the
    data; setting it decouples the schedule from the dataset size."""

    batch_size: int
    epochs: int
    seed: int = 0
    lr_init: float = 1e-3
    lr_decay: float = 0.8
    decay_interval: int = 80
    steps_per_epoch: int | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.decay_interval < 1:
            raise ContractError("batch_size, epochs, decay_interval must be >= 1")
        if self.lr_init <= 0 or not (0 < self.lr_decay < 1):
            raise ContractError("need lr_init > 0 and 0 < lr_decay < 1")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ContractError("steps_per_epoch must be >= 1")

    def lr_at_epoch(self, epoch):
        return self.lr_init * self.lr_decay ** (epoch // self.decay_interval)


class _BatchStream:
    """Endless stream of index batches: reshuffles each pass, drops the
    ragged tail (whole-set batches if the data is smaller than one batch)."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch = min(batch_size, n)
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next(self):
        if self.pos + self.batch > self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.order[self.pos: self.pos + self.batch]
        self.pos += self.batch
        return idx


def train(arch: NetArchitecture, schedule: TrainSchedule, features, targets,
          progress=None):
    """Mini-batch Adam training; deterministic per seed.

    Returns (params, loss_history) with one mean-MSE entry per epoch.
    `progress(epoch, mean_loss, lr)` is invoked after each epoch when
    given. Raises TrainingDiverged if the loss goes non-finite.
    """
    X = np.ascontiguousarray(features, dtype=np.float64)
    Y = np.ascontiguousarray(targets, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeError(f"bad dataset shapes {X.shape} / {Y.shape}")
    if X.shape[1] != arch.in_dim or Y.shape[1] != arch.out_dim:
        raise ShapeError(
            f"dataset is {X.shape[1]}->{Y.shape[1]} but network wants "
            f"{arch.in_dim}->{arch.out_dim}"
        )
    rng = np.random.default_rng(schedule.seed)
    params = NetworkParams.initialize(arch, rng)
    stream = _BatchStream(X.shape[0], schedule.batch_size, rng)
    steps_per_epoch = schedule.steps_per_epoch
    if steps_per_epoch is None:
        steps_per_epoch = max(1, X.shape[0] // stream.batch)
    loss_history = np.empty(schedule.epochs)
    for epoch in range(schedule.epochs):
        lr = schedule.lr_at_epoch(epoch)
        acc = 0.0
        for step in range(steps_per_epoch):
            idx = stream.next()
            xb, yb = X[idx], Y[idx]
            out, cache = _forward_cached(params, xb)
            resid = out - yb
            loss = float(np.mean(resid * resid))
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, step)
            grads = _backprop(params, xb, (2.0 / resid.size) * resid)
            adam_step(params, grads, lr)
            acc += loss
        loss_history[epoch] = acc / steps_per_epoch
        if progress is not None:
            progress(epoch, loss_history[epoch], lr)
    return params, loss_history


def _descriptor_bytes(arch, step):
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, _VARIANT_CODES[arch.variant]),
        struct.pack("<I", arch.n_affine),
        struct.pack(f"<{arch.n_affine + 1}I", *arch.layer_widths),
        struct.pack(f"<{arch.n_affine}B", *[int(a) for a in arch.activations]),
        struct.pack("<I", len(arch.shortcut_spans)),
    ]
    for a, b in arch.shortcut_spans:
        parts.append(struct.pack("<II", a, b))
    parts.append(struct.pack("<Q", step))
    return b"".join(parts)


def save_checkpoint(params: NetworkParams, path):
    """Write architecture descriptor + every tensor (trainables, then
    Adam first and second moments) as little-endian float64."""
    arch = params.arch
    with open(path, "wb") as fh:
        fh.write(_descriptor_bytes(arch, params.step))
        for group in (params.tensors, params.m, params.v):
            for name, _shape in param_layout(arch):
                fh.write(np.ascontiguousarray(group[name], dtype="<f8").tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise DataFormatError(f"checkpoint truncated while reading {what}")
    return buf


def load_checkpoint(path, expect_arch: NetArchitecture | None = None):
    """Read a checkpoint back into NetworkParams. Passing expect_arch
    asserts the stored architecture matches it (ShapeError otherwise)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise DataFormatError(f"bad checkpoint magic {magic!r}")
        version, vcode = struct.unpack("<II", _read_exact(fh, 8, "version"))
        if version != CHECKPOINT_VERSION:
            raise DataFormatError(f"unsupported checkpoint version {version}")
        if vcode not in _VARIANT_NAMES:
            raise DataFormatError(f"unknown variant code {vcode}")
        (n_affine,) = struct.unpack("<I", _read_exact(fh, 4, "layer count"))
        widths = struct.unpack(
            f"<{n_affine + 1}I", _read_exact(fh, 4 * (n_affine + 1), "widths")
        )
        acts = struct.unpack(f"<{n_affine}B", _read_exact(fh, n_affine, "activations"))
        (n_spans,) = struct.unpack("<I", _read_exact(fh, 4, "span count"))
        spans = tuple(
            struct.unpack("<II", _read_exact(fh, 8, "span"))
            for _ in range(n_spans)
        )
        (step,) = struct.unpack("<Q", _read_exact(fh, 8, "step"))
        try:
            arch = NetArchitecture(
                layer_widths=widths,
                activations=tuple(bool(a) for a in acts),
                shortcut_spans=spans,
                variant=_VARIANT_NAMES[vcode],
            )
        except ContractError as exc:
            raise DataFormatError(f"inconsistent architecture descriptor: {exc}")
        if expect_arch is not None and (
            expect_arch.layer_widths != arch.layer_widths
            or expect_arch.activations != arch.activations
            or expect_arch.shortcut_spans != arch.shortcut_spans
        ):
            raise ShapeError(
                f"checkpoint holds a {arch.variant} "
                f"({len(arch.layer_widths) - 1} layers), expected {expect_arch.variant}"
            )
        groups = []
        for gname in ("parameters", "adam m", "adam v"):
            tensors = {}
            for name, shape in param_layout(arch):
                n_items = int(np.prod(shape))
                buf = _read_exact(fh, 8 * n_items, f"{gname} tensor {name}")
                tensors[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
            groups.append(tensors)
        if fh.read(1):
            raise DataFormatError("trailing bytes after checkpoint payload")
    return NetworkParams(arch, groups[0], m=groups[1], v=groups[2], step=step)
