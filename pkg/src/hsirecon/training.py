"""Losses, image metrics, Adam, patch sampling and the reconstruction training loop."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import DegenerateMaskError
from .autograd import Tensor, ops
from .hypercube import render_rgb
from .nets import build_network, default_spec

MRAE_FLOOR = 1e-4
PSNR_INF = math.inf  # reported when prediction and target agree exactly


# masked losses and metrics


def _mask_weights(gt_shape, mask):
    """Per-voxel weights equal to 1/n on foreground voxels, 0 elsewhere."""
    if mask is None:
        weights = np.ones(gt_shape)
    else:
        mask = np.asarray(mask, dtype=bool)
        # [H,W] -> [1,H,W]; [N,H,W] -> [N,1,H,W]
        mask = mask[None] if mask.ndim == 2 else mask[:, None]
        if mask.ndim != len(gt_shape):
            raise ValueError(f"mask shape {mask.shape} incompatible with cube shape {gt_shape}")
        weights = np.broadcast_to(mask, gt_shape).astype(np.float64)
    n = weights.sum()
    if n == 0:
        raise DegenerateMaskError("mask selects no voxel")
    return weights / n


def _prepare(rc, gt):
    gt = np.asarray(gt.data if isinstance(gt, Tensor) else gt, dtype=np.float64)
    is_tensor = isinstance(rc, Tensor)
    rc_t = rc if is_tensor else Tensor(rc)
    if rc_t.shape != gt.shape:
        raise ValueError(f"shape mismatch: prediction {rc_t.shape} vs target {gt.shape}")
    return rc_t, gt, is_tensor


def _finish(t, is_tensor):
    return t if is_tensor else t.item()


def mrae(rc, gt, mask=None, eps=MRAE_FLOOR):
    """Mean of ``|rc - gt| / max(gt, eps)`` over masked voxels.

    Returns a differentiable scalar tensor when ``rc`` is a Tensor, a float
    otherwise. Masks are ``[H,W]`` (or ``[N,H,W]`` for batches) and apply to
    every band.
    """
    rc, gt, is_tensor = _prepare(rc, gt)
    w = _mask_weights(gt.shape, mask) / np.maximum(gt, eps)
    return _finish(ops.sum(ops.mul(ops.abs(ops.sub(rc, gt)), w)), is_tensor)


def l1_loss(rc, gt, mask=None):
    """Masked mean absolute error."""
    rc, gt, is_tensor = _prepare(rc, gt)
    w = _mask_weights(gt.shape, mask)
    return _finish(ops.sum(ops.mul(ops.abs(ops.sub(rc, gt)), w)), is_tensor)


def mse(rc, gt, mask=None):
    rc, gt, is_tensor = _prepare(rc, gt)
    w = _mask_weights(gt.shape, mask)
    return _finish(ops.sum(ops.mul(ops.square(ops.sub(rc, gt)), w)), is_tensor)


def rmse_image(rc, gt, mask=None):
    """Square root of the masked mean squared error."""
    rc = rc.data if isinstance(rc, Tensor) else rc
    return math.sqrt(mse(rc, gt, mask))


def psnr(rc, gt, mask=None, peak=1.0):
    """``10 log10(peak^2 / MSE)`` over masked voxels; :data:`PSNR_INF` if exact."""
    rc = rc.data if isinstance(rc, Tensor) else rc
    err = mse(rc, gt, mask)
    if err == 0:
        return PSNR_INF
    return 10.0 * math.log10(peak ** 2 / err)


LOSSES = {"MRAE": mrae, "L1": l1_loss}


# optimiser


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.99, eps=1e-8):
    """Bias-corrected Adam update of ``params`` in place."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValueError("params, grads and optimiser state differ in length")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        if g.shape != p.shape or m.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# data


@dataclass(frozen=True, eq=False)
class ReconPair:
    """Network-ready sample: RGB ``[3,H,W]`` in [0,1], cube ``[λ,H,W]``, mask ``[H,W]``."""

    rgb: np.ndarray
    cube: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_cube(cls, cube, mask):
        rgb = render_rgb(cube).transpose(2, 0, 1) / 255.0
        return cls(rgb, cube.data.transpose(2, 0, 1).copy(), np.asarray(mask, dtype=bool))


def rgb_to_input(rgb_image):
    """uint8 ``(H,W,3)`` image to the ``[3,H,W]`` float input of the networks."""
    return np.asarray(rgb_image, dtype=np.float64).transpose(2, 0, 1) / 255.0


def patch_grid(height, width, patch, stride):
    """All top-left corners on the stride grid, row-major."""
    if patch > height or patch > width:
        raise ValueError(f"patch {patch} larger than image {height}x{width}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rows = np.arange(0, height - patch + 1, stride)
    cols = np.arange(0, width - patch + 1, stride)
    return [(int(r), int(c)) for r in rows for c in cols]


def sample_patches(pairs, patch, stride, rng, batch_size=1):
    """Draw aligned ``(rgb, cube, mask)`` patch batches.

    Each batch element picks an image uniformly, then a corner uniformly
    from that image's stride grid. ``pairs`` is one :class:`ReconPair` or a
    sequence of them.
    """
    if isinstance(pairs, ReconPair):
        pairs = [pairs]
    rgb, cube, mask = [], [], []
    for _ in range(batch_size):
        pair = pairs[int(rng.integers(len(pairs)))]
        grid = patch_grid(pair.rgb.shape[1], pair.rgb.shape[2], patch, stride)
        r, c = grid[int(rng.integers(len(grid)))]
        rgb.append(pair.rgb[:, r:r + patch, c:c + patch])
        cube.append(pair.cube[:, r:r + patch, c:c + patch])
        mask.append(pair.mask[r:r + patch, c:c + patch])
    return np.stack(rgb), np.stack(cube), np.stack(mask)


# training


@dataclass
class TrainConfig:
    batch_size: int = 8
    patch_size: int = 32
    stride: int = 8
    lr: float = 2e-3
    lr_decay: float = 0.99
    beta1: float = 0.9
    beta2: float = 0.99
    epochs: int = 20
    iters_per_epoch: int = 50
    loss: str = "MRAE"
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "patch_size", "stride", "iters_per_epoch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr < 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("lr must be >= 0 and lr_decay in (0, 1]")
        for name in ("beta1", "beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {sorted(LOSSES)}")

    @classmethod
    def for_architecture(cls, architecture, **overrides):
        """Defaults per network: L1 loss with beta1 = 0.5 for HRNET, MRAE otherwise."""
        base = cls(loss="L1", beta1=0.5) if architecture == "HRNET" else cls()
        return replace(base, **overrides)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    best_epoch: int = 0
    knee_epoch: int = 0

    def __len__(self):
        return len(self.loss)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "loss", "lr", "val_mrae"])
            for e, (loss, lr) in enumerate(zip(self.loss, self.lr), start=1):
                val = self.validation[e - 1]["mrae"] if e <= len(self.validation) else ""
                writer.writerow([e, repr(float(loss)), repr(float(lr)), repr(float(val)) if val != "" else ""])


def knee_point(values, window=3):
    """1-based index of maximum curvature on a decreasing loss curve.

    The curve is smoothed with a centred moving average, both axes are
    rescaled to [0, 1], and the knee is where the rescaled drop
    ``1 - y`` exceeds the diagonal ``x`` by the most.
    """
    y = np.asarray(values, dtype=np.float64)
    if y.size < 3:
        return int(y.size)
    if window > 1:
        pad = window // 2
        padded = np.pad(y, pad, mode="edge")
        y = np.convolve(padded, np.ones(window) / window, mode="valid")[: len(values)]
    x = np.linspace(0.0, 1.0, y.size)
    span = y.max() - y.min()
    if span == 0:
        return 1
    drop = (y.max() - y) / span
    return int(np.argmax(drop - x)) + 1


def train(net, train_pairs, config=None, val_pairs=None, log=None):
    """Fit ``net`` on patches from ``train_pairs`` with Adam.

    Every epoch runs ``iters_per_epoch`` steps, then multiplies the learning
    rate by ``lr_decay``. With ``val_pairs`` the parameters of the epoch with
    the lowest validation MRAE are restored at the end.
    """
    config = config or TrainConfig()
    if not train_pairs:
        raise ValueError("no training images")
    loss_fn = LOSSES[config.loss]
    rng = np.random.default_rng(config.seed)
    params = net.parameters()
    state = AdamState.zeros_like(params)
    history = TrainHistory()
    lr = config.lr
    best = (math.inf, None)
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        for it in range(config.iters_per_epoch):
            rgb, cube, mask = sample_patches(train_pairs, config.patch_size, config.stride, rng, config.batch_size)
            for p in params:
                p.grad = None
            loss = loss_fn(net(Tensor(rgb)), cube, mask)
            value = loss.item()
            if not math.isfinite(value):
                raise FloatingPointError(
                    f"non-finite {config.loss} loss at epoch {epoch}, iteration {it + 1} "
                    f"(lr={lr:g}); last finite epoch loss "
                    f"{history.loss[-1] if history.loss else 'n/a'}"
                )
            loss.backward()
            adam_step(params, [p.grad for p in params], state, lr, config.beta1, config.beta2)
            total += value
        history.loss.append(total / config.iters_per_epoch)
        history.lr.append(lr)
        if val_pairs:
            metrics = evaluate(net, val_pairs)
            history.validation.append(metrics)
            if metrics["mrae"] < best[0]:
                best = (metrics["mrae"], net.state_dict())
                history.best_epoch = epoch
        if log:
            log(epoch, history)
        lr *= config.lr_decay
    if best[1] is not None:
        net.load_state_dict(best[1])
    history.knee_epoch = knee_point(history.loss) if history.loss else 0
    return history


def evaluate(net, pairs, peak=1.0):
    """Masked MRAE, RMSE and PSNR averaged over whole images."""
    if not pairs:
        raise ValueError("cannot evaluate an empty split")
    rows = []
    for pair in pairs:
        pred = net.predict(pair.rgb)
        rows.append((
            mrae(pred, pair.cube, pair.mask),
            rmse_image(pred, pair.cube, pair.mask),
            psnr(pred, pair.cube, pair.mask, peak),
        ))
    m, r, p = (float(np.mean(col)) for col in zip(*rows))
    return {"mrae": m, "rmse": r, "psnr": p}


METRIC_COLUMNS = ("method", "MRAE_val", "RMSE_val", "MRAE_test", "RMSE_test", "PSNR", "wall_clock_s")


def write_metrics_table(rows, path):
    """Rows are dicts keyed by :data:`METRIC_COLUMNS`; missing entries stay blank."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row.get(col, "")) for col in METRIC_COLUMNS])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


class SpectralReconstructor(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` on hypercubes, ``predict`` RGB -> cube.

    ``X`` is a list of uint8 RGB images ``(H,W,3)``, ``y`` the matching list of
    :class:`~hsirecon.hypercube.Hypercube` targets; ``masks`` restrict the loss.
    Unset training knobs take the per-architecture defaults.
    """

    def __init__(self, architecture="HSCNN_D", epochs=None, iters_per_epoch=None, lr=None,
                 patch_size=None, batch_size=None, seed=0):
        self.architecture = architecture
        self.epochs = epochs
        self.iters_per_epoch = iters_per_epoch
        self.lr = lr
        self.patch_size = patch_size
        self.batch_size = batch_size
        self.seed = seed

    def _config(self):
        knobs = ("epochs", "iters_per_epoch", "lr", "patch_size", "batch_size")
        overrides = {k: getattr(self, k) for k in knobs if getattr(self, k) is not None}
        return TrainConfig.for_architecture(self.architecture, seed=self.seed, **overrides)

    def fit(self, X, y, masks=None):
        if len(X) != len(y):
            raise ValueError("X and y differ in length")
        masks = masks if masks is not None else [np.ones(c.shape[:2], dtype=bool) for c in y]
        pairs = [ReconPair(rgb_to_input(img), c.data.transpose(2, 0, 1), np.asarray(m, dtype=bool))
                 for img, c, m in zip(X, y, masks)]
        self.wavelengths_ = y[0].wavelengths
        self.network_ = build_network(default_spec(self.architecture, len(self.wavelengths_)), seed=self.seed)
        self.history_ = train(self.network_, pairs, self._config())
        return self

    def predict(self, X):
        """List of ``(H,W,λ)`` arrays, one per RGB image."""
        return [self.network_.predict(rgb_to_input(img)).transpose(1, 2, 0) for img in X]

    def score(self, X, y, sample_weight=None):
        """Negative mean MRAE (higher is better)."""
        preds = self.predict(X)
        return -float(np.mean([mrae(p, c.data) for p, c in zip(preds, y)]))
