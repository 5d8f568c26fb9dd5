"""Frame quality measures (MSE, SSIM, CW-SSIM) and their aggregation.

All measures take raw255-scale frames. Batched variants accept ``(N, H, W)``
stacks (or ``(N, 4096)`` rows, reshaped to 64x64) and return one value per
frame.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .eigentongue import project_many, reconstruct_many
from .errors import ContractError, SizeError, ValidationError
from .imaging import FRAME_SHAPE, Frame
from .pyramid import decompose

METRICS = ("mse", "ssim", "cwssim")
METRIC_TITLES = {"mse": "MSE", "ssim": "SSIM", "cwssim": "CW-SSIM"}
PAIRINGS = ("O_rec", "PCA_rec", "O_PCA")


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    sigma: float = 1.5
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ValidationError("SSIM exponents must be positive")
        if self.window_size < 1 or self.sigma <= 0:
            raise ValidationError("bad SSIM window")

    @property
    def c1(self):
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self):
        return (self.k2 * self.dynamic_range) ** 2

    @property
    def c3(self):
        return self.c2 / 2.0

    def kernel_1d(self):
        r = np.arange(self.window_size) - (self.window_size - 1) / 2.0
        g = np.exp(-(r * r) / (2.0 * self.sigma ** 2))
        return g / g.sum()

    def window(self):
        """The circular-symmetric 2-D Gaussian weights (sum to one)."""
        g = self.kernel_1d()
        return np.outer(g, g)


@dataclass(frozen=True)
class CwSsimParams:
    pyramid_levels: int = 2
    orientations: int = 4
    window_size: int = 7
    k: float = 0.01

    def __post_init__(self):
        if self.k <= 0:
            raise ValidationError("CW-SSIM stabilizer K must be positive")
        if self.pyramid_levels < 1 or self.orientations < 1 or self.window_size < 1:
            raise ValidationError("bad CW-SSIM configuration")


def _stack(a, b):
    """Coerce a pair of frames/stacks/row-matrices to matching (N, H, W) float stacks."""
    if isinstance(a, Frame) or isinstance(b, Frame):
        if not (isinstance(a, Frame) and isinstance(b, Frame)):
            raise ContractError("compare Frame with Frame")
        if a.scale != b.scale:
            raise ContractError(f"scale tags differ: {a.scale} vs {b.scale}")
        a, b = a.pixels, b.pixels
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2 and a.shape[1] == FRAME_SHAPE[0] * FRAME_SHAPE[1] and a.shape != FRAME_SHAPE:
        a = a.reshape(-1, *FRAME_SHAPE)
        b = b.reshape(-1, *FRAME_SHAPE)
    elif a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ContractError(f"cannot interpret shape {a.shape} as frames")
    return a, b


def mse_batch(y, y_hat):
    a, b = _stack(y, y_hat)
    d = a - b
    return np.mean(d * d, axis=(1, 2))


def mse(y, y_hat):
    return float(mse_batch(y, y_hat)[0])


def ssim_batch(y, y_hat, p=SsimParams()):
    a, b = _stack(y, y_hat)
    if min(a.shape[1:]) < p.window_size:
        raise SizeError(f"frames {a.shape[1:]} are smaller than the {p.window_size}x{p.window_size} window")
    g = p.kernel_1d()
    mu_a = _kernels.valid_filter2d(a, g)
    mu_b = _kernels.valid_filter2d(b, g)
    var_a = _kernels.valid_filter2d(a * a, g) - mu_a * mu_a
    var_b = _kernels.valid_filter2d(b * b, g) - mu_b * mu_b
    cov = _kernels.valid_filter2d(a * b, g) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + p.c1) / (mu_a ** 2 + mu_b ** 2 + p.c1)
    if p.alpha == p.beta == p.gamma == 1.0 and p.c3 == p.c2 / 2:
        local = lum * (2 * cov + p.c2) / (var_a + var_b + p.c2)
    else:
        sd_a = np.sqrt(np.maximum(var_a, 0.0))
        sd_b = np.sqrt(np.maximum(var_b, 0.0))
        con = (2 * sd_a * sd_b + p.c2) / (var_a + var_b + p.c2)
        struct_ = (cov + p.c3) / (sd_a * sd_b + p.c3)
        local = np.sign(lum) * np.abs(lum) ** p.alpha * np.abs(con) ** p.beta * np.sign(struct_) * np.abs(struct_) ** p.gamma
    return local.mean(axis=(1, 2))


def ssim(y, y_hat, p=SsimParams()):
    return float(ssim_batch(y, y_hat, p)[0])


def cw_ssim_from_coefficients(w_y, w_yh, window_size=7, k=0.01):
    """Mean of the windowed CW-SSIM index over all subbands and window positions.

    ``w_y`` and ``w_yh`` hold complex coefficients shaped ``(..., H, W)``;
    the leading axes enumerate (frame, subband). Returns one value per frame
    (leading axis), averaging over every other axis.
    """
    w_y = np.asarray(w_y, dtype=np.complex128)
    w_yh = np.asarray(w_yh, dtype=np.complex128)
    if w_y.shape != w_yh.shape:
        raise ContractError("coefficient arrays differ in shape")
    lead = w_y.shape[:-2]
    h, w = w_y.shape[-2:]
    if min(h, w) < window_size:
        raise SizeError(f"subband {h}x{w} smaller than the {window_size}x{window_size} window")
    a = w_y.reshape(-1, h, w)
    b = w_yh.reshape(-1, h, w)
    box = np.ones(window_size)
    cross = _kernels.valid_filter2d(a * np.conj(b), box)
    energy = _kernels.valid_filter2d(np.abs(a) ** 2 + np.abs(b) ** 2, box)
    index = (2.0 * np.abs(cross) + k) / (energy + k)
    index = index.reshape(lead + index.shape[1:])
    if len(lead) == 0:
        return float(index.mean())
    return index.reshape(lead[0], -1).mean(axis=1)


def cw_ssim_batch(y, y_hat, p=CwSsimParams()):
    a, b = _stack(y, y_hat)
    wa = decompose(a, p.pyramid_levels, p.orientations)
    wb = decompose(b, p.pyramid_levels, p.orientations)
    return cw_ssim_from_coefficients(wa, wb, p.window_size, p.k)


def cw_ssim(y, y_hat, p=CwSsimParams()):
    return float(cw_ssim_batch(y, y_hat, p)[0])


def all_metrics(y, y_hat, ssim_params=SsimParams(), cw_params=CwSsimParams()):
    """``(N, 3)`` array of (mse, ssim, cwssim) per frame."""
    return np.column_stack([mse_batch(y, y_hat), ssim_batch(y, y_hat, ssim_params),
                            cw_ssim_batch(y, y_hat, cw_params)])


# ---------------------------------------------------------------------------
# curves and reports
# ---------------------------------------------------------------------------

def utterance_curves(original, reconstructed, basis, ssim_params=SsimParams(), cw_params=CwSsimParams()):
    """Per-frame metric curves for the three pairings.

    ``original`` and ``reconstructed`` are ``(F, 4096)`` raw255 rows (or
    matching stacks). Returns ``{pairing: (F, 3) array}`` with columns
    ordered as :data:`METRICS`.
    """
    o = np.asarray(original, dtype=np.float64).reshape(len(original), -1)
    r = np.asarray(reconstructed, dtype=np.float64).reshape(len(reconstructed), -1)
    if o.shape != r.shape:
        raise ContractError(f"{len(o)} original vs {len(r)} reconstructed frames")
    pca = reconstruct_many(project_many(o, basis), basis)
    stacks = {name: x.reshape(-1, *FRAME_SHAPE) for name, x in (("O", o), ("PCA", pca), ("rec", r))}
    # each stack is decomposed once and shared by the two pairings it takes part in
    coeffs = {name: decompose(x, cw_params.pyramid_levels, cw_params.orientations) for name, x in stacks.items()}
    out = {}
    for pairing in PAIRINGS:
        left, right = pairing.split("_")
        a, b = stacks[left], stacks[right]
        out[pairing] = np.column_stack([
            mse_batch(a, b),
            ssim_batch(a, b, ssim_params),
            cw_ssim_from_coefficients(coeffs[left], coeffs[right], cw_params.window_size, cw_params.k),
        ])
    return out


@dataclass
class QualityReport:
    """Per-frame (mse, ssim, cwssim) rows grouped by utterance, plus corpus statistics."""

    system: str
    frames: dict = field(default_factory=dict)  # utterance_id -> (F, 3)
    pairing: str = "O_rec"

    @property
    def all_frames(self):
        return np.vstack([self.frames[k] for k in self.frames])

    @property
    def utterance_means(self):
        return {k: v.mean(axis=0) for k, v in self.frames.items()}

    @property
    def mean(self):
        return self.all_frames.mean(axis=0)

    @property
    def std(self):
        return self.all_frames.std(axis=0)

    def summary(self):
        m, s = self.mean, self.std
        return {name: (float(m[i]), float(s[i])) for i, name in enumerate(METRICS)}


def aggregate(per_frame, system="", pairing="O_rec"):
    """Build a :class:`QualityReport` from ``{utterance_id: (F, 3) rows}``.

    A bare ``(F, 3)`` array is accepted as a single anonymous utterance.
    Statistics are population mean/std over all frames.
    """
    if not isinstance(per_frame, dict):
        per_frame = {"": per_frame}
    rows = {k: np.atleast_2d(np.asarray(v, dtype=np.float64)) for k, v in per_frame.items()}
    if not rows or sum(len(v) for v in rows.values()) == 0:
        raise ContractError("aggregate needs at least one frame")
    for k, v in rows.items():
        if v.shape[1] != len(METRICS):
            raise ContractError(f"{k}: expected {len(METRICS)} metric columns")
    return QualityReport(system, rows, pairing)


def _fmt(v, metric):
    return f"{v:.2f}" if metric == "mse" else f"{v:.4f}"


def format_table(rows):
    """Text table with one row per system: hidden layers, UTI features, metric mean/std.

    ``rows`` is a sequence of ``(hidden_layers_text, features_text, QualityReport)``.
    """
    head1 = ["Hidden Layers", "UTI features"] + [METRIC_TITLES[m] for m in METRICS for _ in (0, 1)]
    head2 = ["", ""] + ["Mean", "Std.dev."] * len(METRICS)
    body = []
    for hidden, feats, rep in rows:
        s = rep.summary()
        cells = [hidden, feats]
        for m in METRICS:
            cells += [_fmt(s[m][0], m), _fmt(s[m][1], m)]
        body.append(cells)
    table = [head1, head2] + body
    widths = [max(len(r[i]) for r in table) for i in range(len(head1))]
    rule = "-+-".join("-" * w for w in widths)

    def line(r):
        return " | ".join(c.rjust(w) if i >= 2 else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))

    return "\n".join([line(head1), line(head2), rule] + [line(r) for r in body]) + "\n"


def write_summary_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["system", "hidden_layers", "uti_features", "pairing", "metric", "mean", "std"])
        for hidden, feats, rep in rows:
            for m, (mu, sd) in rep.summary().items():
                w.writerow([rep.system, hidden, feats, rep.pairing, m, repr(mu), repr(sd)])


def write_frame_csv(path, curves_by_utterance):
    """Rows ``utterance_id,frame,metric,pairing,value`` from ``{uid: {pairing: (F, 3)}}``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["utterance_id", "frame", "metric", "pairing", "value"])
        for uid, curves in curves_by_utterance.items():
            for pairing in PAIRINGS:
                vals = curves[pairing]
                for i in range(vals.shape[0]):
                    for j, m in enumerate(METRICS):
                        w.writerow([uid, i, m, pairing, repr(float(vals[i, j]))])


def read_frame_csv(path):
    """Inverse of :func:`write_frame_csv`: ``{uid: {pairing: (F, 3)}}``."""
    acc = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            per = acc.setdefault(row["utterance_id"], {}).setdefault(row["pairing"], {})
            per[(int(row["frame"]), row["metric"])] = float(row["value"])
    out = {}
    for uid, by_pair in acc.items():
        out[uid] = {}
        for pairing, cells in by_pair.items():
            n = 1 + max(i for i, _ in cells)
            arr = np.empty((n, len(METRICS)))
            for (i, m), v in cells.items():
                arr[i, METRICS.index(m)] = v
            out[uid][pairing] = arr
    return out

