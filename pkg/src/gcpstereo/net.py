"""Siamese patch network that scores how well two 9x9 patches match.

Each branch is four valid (unpadded) 3x3 convolutions with 64 output maps and
a ReLU after every layer, so a 9x9 patch shrinks 9 -> 7 -> 5 -> 3 -> 1 and
comes out as a 64-vector.  Both branches use the same :class:`NetworkParams`.
The matching confidence of a patch pair is the inner product of their
vectors.

Convolutions are written for whole images: the 64 maps at location
``(y, x)`` of the output are exactly the descriptor of the 9x9 patch whose
top-left corner is ``(y, x)``.  Training and dense inference both lean on
that to share work between overlapping patches.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ._validation import DegenerateInputError, check_d_max, check_pair

__all__ = [
    "PATCH_SIZE",
    "PATCH_RADIUS",
    "N_FEATURES",
    "NetworkParams",
    "TrainConfig",
    "ExampleSet",
    "TrainingDivergedError",
    "init_params",
    "feature_maps",
    "forward_patch",
    "confidence",
    "hinge_loss",
    "sample_examples",
    "batch_loss_and_grad",
    "patch_loss_and_grad",
    "train",
    "confidence_volume",
    "raw_confidence_volume",
    "save_params",
    "load_params",
]

PATCH_SIZE = 9
PATCH_RADIUS = PATCH_SIZE // 2
N_FEATURES = 64
N_LAYERS = 4
KERNEL = 3


class TrainingDivergedError(RuntimeError):
    pass


def _as_float(a):
    a = np.array(a)
    return a if a.dtype in (np.float32, np.float64) else a.astype(np.float64)


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Kernels ``(3, 3, in_maps, 64)`` and biases ``(64,)`` for the four layers."""

    weights: tuple
    biases: tuple

    def __post_init__(self):
        weights = tuple(_as_float(w) for w in self.weights)
        biases = tuple(_as_float(b) for b in self.biases)
        if len(weights) != N_LAYERS or len(biases) != N_LAYERS:
            raise ValueError(f"expected {N_LAYERS} layers, got {len(weights)} kernels and {len(biases)} biases")
        in_maps = 1
        for k, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (KERNEL, KERNEL, in_maps, N_FEATURES):
                raise ValueError(f"layer {k + 1} kernel has shape {w.shape}, expected "
                                 f"{(KERNEL, KERNEL, in_maps, N_FEATURES)}")
            if b.shape != (N_FEATURES,):
                raise ValueError(f"layer {k + 1} bias has shape {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k + 1} has non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
            in_maps = N_FEATURES
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat(self):
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    @classmethod
    def from_flat(cls, vec):
        vec = np.asarray(vec, dtype=np.float64)
        weights, biases, pos, in_maps = [], [], 0, 1
        for _ in range(N_LAYERS):
            n = KERNEL * KERNEL * in_maps * N_FEATURES
            weights.append(vec[pos:pos + n].reshape(KERNEL, KERNEL, in_maps, N_FEATURES))
            pos += n
            biases.append(vec[pos:pos + N_FEATURES])
            pos += N_FEATURES
            in_maps = N_FEATURES
        if pos != vec.size:
            raise ValueError(f"flat parameter vector has {vec.size} entries, expected {pos}")
        return cls(tuple(weights), tuple(biases))

    @property
    def dtype(self):
        return self.weights[0].dtype

    def astype(self, dtype):
        return NetworkParams(tuple(w.astype(dtype) for w in self.weights),
                             tuple(b.astype(dtype) for b in self.biases))

    def equals(self, other):
        return all(np.array_equal(a, b) for a, b in zip(self.flat_parts(), other.flat_parts()))

    def flat_parts(self):
        return [a for pair in zip(self.weights, self.biases) for a in pair]


@dataclass
class TrainConfig:
    epsilon: float = 0.2
    lr: float = 0.003
    epochs: int = 20
    batch_size: int = 1
    n_low: int = 4
    n_high: int = 8
    p_high: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.n_low <= self.n_high:
            raise ValueError("need 0 < n_low <= n_high")
        if self.p_high < 0:
            raise ValueError("p_high must be >= 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def init_params(seed=0):
    """Uniform weights in +-sqrt(1/fan_in), zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    weights, biases, in_maps = [], [], 1
    for _ in range(N_LAYERS):
        bound = np.sqrt(1.0 / (KERNEL * KERNEL * in_maps))
        weights.append(rng.uniform(-bound, bound, size=(KERNEL, KERNEL, in_maps, N_FEATURES)))
        biases.append(np.zeros(N_FEATURES))
        in_maps = N_FEATURES
    return NetworkParams(tuple(weights), tuple(biases))


def _conv_forward(a, w, b):
    n, h, wd, _ = a.shape
    ho, wo = h - KERNEL + 1, wd - KERNEL + 1
    z = np.broadcast_to(b, (n, ho, wo, w.shape[3])).copy()
    for i in range(KERNEL):
        for j in range(KERNEL):
            z += a[:, i:i + ho, j:j + wo, :] @ w[i, j]
    return z


def _conv_backward(a, w, dz, need_input_grad=True):
    _, ho, wo, c_out = dz.shape
    dz_flat = dz.reshape(-1, c_out)
    dw = np.empty_like(w)
    da = np.zeros_like(a) if need_input_grad else None
    for i in range(KERNEL):
        for j in range(KERNEL):
            window = a[:, i:i + ho, j:j + wo, :]
            dw[i, j] = window.reshape(-1, a.shape[3]).T @ dz_flat
            if need_input_grad:
                da[:, i:i + ho, j:j + wo, :] += dz @ w[i, j].T
    return dw, dz_flat.sum(axis=0), da


def _forward(params, images):
    """Run the stack on ``(n, h, w)`` images; return every layer's activation."""
    acts = [np.asarray(images, dtype=params.dtype)[..., np.newaxis]]
    for w, b in zip(params.weights, params.biases):
        acts.append(np.maximum(_conv_forward(acts[-1], w, b), 0.0))
    return acts


def _backward(params, acts, d_out):
    grads_w, grads_b = [None] * N_LAYERS, [None] * N_LAYERS
    delta = d_out
    for k in reversed(range(N_LAYERS)):
        delta = delta * (acts[k + 1] > 0)
        grads_w[k], grads_b[k], delta = _conv_backward(acts[k], params.weights[k], delta,
                                                      need_input_grad=k > 0)
    return NetworkParams(tuple(grads_w), tuple(grads_b))


def feature_maps(params, image, pad=True):
    """Dense 64-channel descriptors for every pixel of ``image``.

    With ``pad`` the image is edge-replicated by 4 pixels, so the output has
    the input's shape and ``out[y, x]`` describes the patch centered on
    ``(x, y)``.  Without padding the output shrinks by 8 in each dimension.
    """
    image = np.asarray(image, dtype=np.float64)
    if pad:
        image = np.pad(image, PATCH_RADIUS, mode="edge")
    if min(image.shape) < PATCH_SIZE:
        raise ValueError(f"image of shape {image.shape} is smaller than a {PATCH_SIZE}x{PATCH_SIZE} patch")
    return _forward(params, image[np.newaxis])[-1][0]


def _check_patch(patch):
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape != (PATCH_SIZE, PATCH_SIZE):
        raise ValueError(f"patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {patch.shape}")
    return patch


def forward_patch(params, patch):
    """64-vector descriptor of one 9x9 patch."""
    return _forward(params, _check_patch(patch)[np.newaxis])[-1].reshape(N_FEATURES)


def confidence(params, left_patch, right_patch):
    """Raw (unnormalized) matching confidence: inner product of the descriptors."""
    feats = _forward(params, np.stack([_check_patch(left_patch), _check_patch(right_patch)]))[-1]
    feats = feats.reshape(2, N_FEATURES)
    return float(feats[0] @ feats[1])


def hinge_loss(s_pos, s_neg, epsilon=0.2):
    """``max(0, epsilon + s_neg - s_pos)``; works elementwise on arrays."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    out = np.maximum(0.0, epsilon + np.asarray(s_neg, dtype=np.float64) - np.asarray(s_pos, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


@dataclass
class ExampleSet:
    """Positive/negative example pairs sampled from one stereo pair.

    Every entry is one location: ``(y, x)`` is the left patch center,
    ``x_pos``/``x_neg`` are the right patch centers (same row) of the
    positive and negative example.
    """

    y: np.ndarray
    x: np.ndarray
    x_pos: np.ndarray
    x_neg: np.ndarray
    o_pos: np.ndarray = field(repr=False)
    o_neg: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.y)

    def patches(self, left, right):
        """Materialize ``(left, positive right, negative right)`` patch stacks."""
        r = PATCH_RADIUS
        grab = lambda img, ys, xs: np.stack(  # noqa: E731
            [img[y - r:y + r + 1, x - r:x + r + 1] for y, x in zip(ys, xs)]
        ) if len(ys) else np.empty((0, PATCH_SIZE, PATCH_SIZE))
        return grab(left, self.y, self.x), grab(right, self.y, self.x_pos), grab(right, self.y, self.x_neg)


def draw_offsets(n, cfg, rng):
    """Draw ``n`` positive and ``n`` negative horizontal offsets.

    Negative offsets are uniform over ``+-[n_low, n_high]``, positive ones
    over ``[-p_high, p_high]`` (zero included).
    """
    magnitude = rng.integers(cfg.n_low, cfg.n_high + 1, size=n)
    sign = np.where(rng.integers(0, 2, size=n) == 1, 1, -1)
    o_neg = sign * magnitude
    o_pos = rng.integers(-cfg.p_high, cfg.p_high + 1, size=n)
    return o_pos, o_neg


def sample_examples(left, right, gt, cfg, rng):
    """One positive and one negative example for every usable GT pixel.

    GT disparities are rounded to the nearest integer for patch centering.
    Offsets are drawn for every known pixel in row-major order; locations
    where the left patch or either right patch would leave the image are
    dropped afterwards.
    """
    left, right = check_pair(left, right)
    gt = np.asarray(gt, dtype=np.float64)
    if gt.shape != left.shape:
        raise ValueError(f"ground truth shape {gt.shape} does not match images {left.shape}")
    rng = np.random.default_rng(rng)
    ys, xs = np.nonzero(np.isfinite(gt))
    if ys.size == 0:
        raise DegenerateInputError("ground truth has no known disparities")
    d_t = np.rint(gt[ys, xs]).astype(np.int64)
    o_pos, o_neg = draw_offsets(ys.size, cfg, rng)
    x_pos = xs - d_t + o_pos
    x_neg = xs - d_t + o_neg
    h, w = left.shape
    r = PATCH_RADIUS
    inside = lambda v, hi: (v >= r) & (v <= hi - 1 - r)  # noqa: E731
    keep = inside(ys, h) & inside(xs, w) & inside(x_pos, w) & inside(x_neg, w)
    return ExampleSet(ys[keep], xs[keep], x_pos[keep], x_neg[keep], o_pos[keep], o_neg[keep])


def _scores_and_dloss(f_left, f_pos, f_neg, epsilon):
    s_pos = np.einsum("ij,ij->i", f_left, f_pos)
    s_neg = np.einsum("ij,ij->i", f_left, f_neg)
    margin = epsilon + s_neg - s_pos
    losses = np.maximum(0.0, margin)
    active = (margin > 0).astype(f_left.dtype)[:, np.newaxis]
    # d loss / d features for every gathered descriptor
    return losses, active * (f_neg - f_pos), -active * f_left, active * f_left


def batch_loss_and_grad(params, pairs, epsilon=0.2, need_grad=True):
    """Summed hinge loss over examples drawn from whole stereo pairs.

    ``pairs`` is a sequence of ``(left, right, ExampleSet)``.  Images of one
    call are run through the network together when they share a shape.
    Returns ``(sum_loss, n_examples, grad)``; ``grad`` is ``None`` when
    ``need_grad`` is false.
    """
    r = PATCH_RADIUS
    total, count = 0.0, 0
    grad = None
    by_shape = {}
    for left, right, ex in pairs:
        if len(ex):
            by_shape.setdefault(np.shape(left), []).append((left, right, ex))
    for group in by_shape.values():
        images = np.stack([img for left, right, _ in group for img in (left, right)])
        acts = _forward(params, images)
        feats = acts[-1]
        d_feats = np.zeros_like(feats) if need_grad else None
        for i, (_, _, ex) in enumerate(group):
            fy = ex.y - r
            fl = feats[2 * i, fy, ex.x - r]
            fp = feats[2 * i + 1, fy, ex.x_pos - r]
            fn = feats[2 * i + 1, fy, ex.x_neg - r]
            losses, g_left, g_pos, g_neg = _scores_and_dloss(fl, fp, fn, epsilon)
            total += float(losses.sum())
            count += len(ex)
            if need_grad:
                np.add.at(d_feats[2 * i], (fy, ex.x - r), g_left)
                np.add.at(d_feats[2 * i + 1], (fy, ex.x_pos - r), g_pos)
                np.add.at(d_feats[2 * i + 1], (fy, ex.x_neg - r), g_neg)
        if need_grad:
            g = _backward(params, acts, d_feats)
            grad = g if grad is None else _add(grad, g)
    return total, count, grad


def patch_loss_and_grad(params, left_patches, pos_patches, neg_patches, epsilon=0.2):
    """Summed hinge loss and its gradient for explicit 9x9 patch triples."""
    left_patches, pos_patches, neg_patches = (np.asarray(p, dtype=np.float64)
                                              for p in (left_patches, pos_patches, neg_patches))
    n = left_patches.shape[0]
    for p in (left_patches, pos_patches, neg_patches):
        if p.shape != (n, PATCH_SIZE, PATCH_SIZE):
            raise ValueError(f"patch stacks must be ({n}, 9, 9), got {p.shape}")
    acts = _forward(params, np.concatenate([left_patches, pos_patches, neg_patches]))
    feats = acts[-1].reshape(3, n, N_FEATURES)
    losses, g_left, g_pos, g_neg = _scores_and_dloss(feats[0], feats[1], feats[2], epsilon)
    d_out = np.concatenate([g_left, g_pos, g_neg]).reshape(3 * n, 1, 1, N_FEATURES)
    return float(losses.sum()), _backward(params, acts, d_out)


def _add(a, b):
    return NetworkParams(tuple(x + y for x, y in zip(a.weights, b.weights)),
                         tuple(x + y for x, y in zip(a.biases, b.biases)))


def _sgd_step(params, grad, step):
    return NetworkParams(tuple(w - step * g for w, g in zip(params.weights, grad.weights)),
                         tuple(b - step * g for b, g in zip(params.biases, grad.biases)))


def _dataset_loss(params, prepared, epsilon, chunk):
    total, count = 0.0, 0
    for start in range(0, len(prepared), chunk):
        s, c, _ = batch_loss_and_grad(params, prepared[start:start + chunk], epsilon, need_grad=False)
        total += s
        count += c
    return total / max(count, 1)


def train(dataset, cfg=None, params=None, log=None):
    """Fit the network with minibatch SGD on the summed hinge loss.

    ``dataset`` is a sequence of ``(left, right, gt)`` with normalized images.
    Examples are sampled once from every pair.  A minibatch is every example
    of ``cfg.batch_size`` stereo pairs; each step moves the parameters by
    ``lr`` times the gradient of the minibatch's summed hinge loss, so the
    effective step grows with the number of examples per pair.  Arithmetic
    runs in float32, the precision of the model file.

    Returns ``(params, loss_curve)`` where ``loss_curve[k]`` is the mean
    hinge loss over all examples after epoch ``k`` (entry 0 is before any
    update).  ``log``, if given, is called as ``log(epoch, mean_loss)``.
    """
    cfg = cfg or TrainConfig()
    if len(dataset) == 0:
        raise DegenerateInputError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    params = params if params is not None else init_params(cfg.seed)
    start_params, out_dtype = params, params.dtype
    params = params.astype(np.float32)
    n_steps = 0
    prepared = []
    for left, right, gt in dataset:
        left, right = check_pair(left, right)
        ex = sample_examples(left, right, gt, cfg, rng)
        if len(ex):
            prepared.append((left, right, ex))
    if not prepared:
        raise DegenerateInputError("no usable training examples in the dataset")

    eval_chunk = max(cfg.batch_size, 16)
    curve = [_dataset_loss(params, prepared, cfg.epsilon, eval_chunk)]
    if log:
        log(0, curve[0])
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(prepared))
        for start in range(0, len(order), cfg.batch_size):
            batch = [prepared[i] for i in order[start:start + cfg.batch_size]]
            try:
                # NetworkParams rejects non-finite gradients and parameters
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, count, grad = batch_loss_and_grad(params, batch, cfg.epsilon)
                if not np.isfinite(loss):
                    raise ValueError("non-finite loss")
                if cfg.lr and count:
                    with np.errstate(over="ignore", invalid="ignore"):
                        params = _sgd_step(params, grad, cfg.lr)
                    n_steps += 1
            except ValueError as exc:
                raise TrainingDivergedError(
                    f"{exc} at epoch {epoch}, batch starting at pair {start}; "
                    f"try a smaller learning rate (lr={cfg.lr})") from exc
        curve.append(_dataset_loss(params, prepared, cfg.epsilon, eval_chunk))
        if not np.isfinite(curve[-1]):
            raise TrainingDivergedError(f"non-finite mean loss after epoch {epoch} (lr={cfg.lr})")
        if log:
            log(epoch, curve[-1])
    if n_steps == 0:
        # nothing moved; hand back the caller's parameters at full precision
        return start_params, curve
    return params.astype(out_dtype), curve


def raw_confidence_volume(params, left, right, d_max):
    """Unnormalized inner products ``F_L(x, y) . F_R(x - d, y)``; 0 where ``x < d``."""
    left, right = check_pair(left, right)
    d_max = check_d_max(d_max)
    fl = feature_maps(params, left)
    fr = feature_maps(params, right)
    h, w = left.shape
    raw = np.zeros((h, w, d_max + 1))
    for d in range(min(d_max, w - 1) + 1):
        raw[:, d:, d] = np.einsum("ijk,ijk->ij", fl[:, d:], fr[:, :w - d])
    return raw


def confidence_volume(params, left, right, d_max):
    """Dense confidences min-max normalized over the whole volume into [0, 1].

    A constant raw volume maps to all zeros.
    """
    raw = raw_confidence_volume(params, left, right, d_max)
    lo, hi = raw.min(), raw.max()
    if not hi > lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


_MAGIC = b"GCPSIAM1"


def save_params(params, path):
    """Little-endian model file.

    Layout: 8-byte magic, u32 layer count, per layer four u32 kernel dims
    ``(kh, kw, in, out)``, then for each layer its kernel (C order) and its
    bias as float32.
    """
    with open(os.fspath(path), "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(params.weights)))
        for w in params.weights:
            fh.write(struct.pack("<4I", *w.shape))
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_params(path):
    with open(os.fspath(path), "rb") as fh:
        data = fh.read()
    if data[:len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic)")
    pos = len(_MAGIC)
    try:
        (n_layers,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shapes = [struct.unpack_from("<4I", data, pos + 16 * k) for k in range(n_layers)]
        pos += 16 * n_layers
        weights, biases = [], []
        for shape in shapes:
            n = int(np.prod(shape))
            weights.append(np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(shape))
            pos += 4 * n
            biases.append(np.frombuffer(data, dtype="<f4", count=shape[3], offset=pos))
            pos += 4 * shape[3]
    except (struct.error, ValueError) as exc:
        raise ValueError(f"{path}: truncated or corrupt model file") from exc
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes in model file")
    return NetworkParams(tuple(weights), tuple(biases))
