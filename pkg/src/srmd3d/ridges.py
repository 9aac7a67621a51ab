"""Ridge tracking in the time-frequency-chirprate cube.

Each ridge is the best path through ``(xi, beta)`` per frame under

    sum_f log|CT(f, xi_f, beta_f)| - mu * ((d_xi - beta dt / df)^2 + nu * d_beta^2)

where ``d_xi`` is measured in frequency bins and the chirp rate predicts the
expected frequency step. The predicted step is what keeps two ridges from
swapping identity where their IFs cross: a path that bounces off the other
ridge has to flip its chirp rate, which the ``d_beta`` term charges for.

Ridges are extracted greedily by energy. After each extraction the ridge's
own contribution is removed before the next search, either by subtracting
the modelled chirplet response of a linear chirp along the ridge (default)
or by zeroing a box around its ``(xi, beta)`` location in every frame.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import savgol_filter

from .signal import Signal
from .tfa import STFTGrid, TFCRepresentation, chirplet_transform, default_cr_axis


class RidgeError(ValueError):
    """Raised when fewer ridges than requested can be resolved."""

    def __init__(self, message: str, found: int = 0):
        super().__init__(message)
        self.found = found


@dataclass(frozen=True)
class RidgeCurve:
    """Estimated IF (Hz) and chirp rate (Hz/s) of one mode, per frame."""

    time_s: np.ndarray
    if_hz: np.ndarray
    cr_hzps: np.ndarray
    energy: np.ndarray
    freq_bin_hz: float = 1.0
    cr_bin_hzps: float = 1.0

    def __len__(self) -> int:
        return self.if_hz.size

    def at(self, tau):
        """Linearly interpolated ``(if, cr)`` at times ``tau``."""
        tau = np.asarray(tau, dtype=float)
        if self.time_s.size == 1:
            return np.full_like(tau, self.if_hz[0]), np.full_like(tau, self.cr_hzps[0])
        return (np.interp(tau, self.time_s, self.if_hz),
                np.interp(tau, self.time_s, self.cr_hzps))


def _offsets(ji: int, jj: int):
    di, dj = np.meshgrid(np.arange(-ji, ji + 1), np.arange(-jj, jj + 1), indexing="ij")
    # order by |step| so equal scores prefer the smaller move
    order = np.lexsort((np.abs(dj).ravel(), np.abs(di).ravel()))
    return di.ravel()[order], dj.ravel()[order]


def _shift(a: np.ndarray, di: int, dj: int, fill: float) -> np.ndarray:
    """``out[i, j] = a[i - di, j - dj]`` with ``fill`` outside."""
    out = np.full_like(a, fill)
    ni, nj = a.shape
    src_i = slice(max(0, -di), ni - max(0, di))
    dst_i = slice(max(0, di), ni - max(0, -di))
    src_j = slice(max(0, -dj), nj - max(0, dj))
    dst_j = slice(max(0, dj), nj - max(0, -dj))
    out[dst_i, dst_j] = a[src_i, src_j]
    return out


def _track(emission: np.ndarray, cr_axis: np.ndarray, step_bins_per_cr: float,
           mu: float, nu: float, ji: int, jj: int):
    """Viterbi pass over the (freq, cr) state grid. Returns (i_path, j_path)."""
    n_frames, ni, nj = emission.shape
    dis, djs = _offsets(ji, jj)
    jidx = np.arange(nj)
    costs = []
    for di, dj in zip(dis, djs):
        jprev = np.clip(jidx - dj, 0, nj - 1)
        pred = 0.5 * (cr_axis[jprev] + cr_axis) * step_bins_per_cr
        costs.append(mu * ((di - pred) ** 2 + nu * dj**2))
    back = np.zeros((n_frames, ni, nj), dtype=np.int16)
    score = emission[0].copy()
    for f in range(1, n_frames):
        best = np.full((ni, nj), -np.inf)
        arg = np.zeros((ni, nj), dtype=np.int16)
        for k, (di, dj) in enumerate(zip(dis, djs)):
            cand = _shift(score, di, dj, -np.inf) - costs[k][None, :]
            better = cand > best
            best[better] = cand[better]
            arg[better] = k
        score = best + emission[f]
        back[f] = arg
    # argmax over a C-ordered (freq, cr) grid breaks ties by lowest freq, then cr
    flat = int(np.argmax(score))
    i, j = divmod(flat, nj)
    ip = np.empty(n_frames, dtype=int)
    jp = np.empty(n_frames, dtype=int)
    ip[-1], jp[-1] = i, j
    for f in range(n_frames - 1, 0, -1):
        k = back[f, i, j]
        i, j = i - dis[k], j - djs[k]
        ip[f - 1], jp[f - 1] = i, j
    return ip, jp


def _parabolic_offsets(logm: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Sub-bin peak offsets along the last axis from three-point log-magnitude fits."""
    n = logm.shape[-1]
    i = np.clip(idx, 1, n - 2)
    rows = np.arange(idx.size)
    a, b, c = logm[rows, i - 1], logm[rows, i], logm[rows, i + 1]
    den = a - 2 * b + c
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(den < 0, 0.5 * (a - c) / den, 0.0)
    d = np.clip(d, -0.5, 0.5)
    # stay on the grid at the edges
    return np.where((idx > 0) & (idx < n - 1), d + (i - idx), 0.0)


def detect_ridges(tfc: TFCRepresentation, k: int, jump_limit_hz: float | None = None,
                  peel_band_hz: float | None = None, peel_band_cr: float | None = None,
                  cr_jump_bins: int = 2, mu: float | None = None, nu: float | None = None,
                  min_ridge_ratio: float = 2.0, refine: bool = True) -> list[RidgeCurve]:
    """Extract ``k`` ridge curves from a chirplet representation.

    Parameters
    ----------
    tfc : TFCRepresentation
    k : int
        Number of ridges.
    jump_limit_hz : float, optional
        Largest frequency move between frames. Defaults to three frequency
        bins or 1.25 times the move implied by the largest chirp rate on the
        axis, whichever is larger.
    peel_band_hz, peel_band_cr : float, optional
        Half-widths of a box zeroed around each extracted ridge. When both
        are omitted (and the window is known) the ridge is peeled by
        subtracting the chirplet response of a linear chirp with the ridge's
        IF, chirp rate and complex value, which leaves a crossing mode
        intact.
    cr_jump_bins : int
        Largest chirp-rate move between frames, in bins.
    mu, nu : float, optional
        Smoothness weights. ``mu`` defaults to 10% of the median per-frame
        peak log-energy (relative to the median magnitude of the cube), ``nu``
        converts a chirp-rate change into the frequency-step change it implies.
    min_ridge_ratio : float
        A ridge whose median magnitude is below this multiple of the cube's
        median magnitude counts as unresolved.
    refine : bool
        Refine IF and chirp rate to sub-bin precision by parabolic fits of
        the log-magnitude around each ridge point.

    Raises
    ------
    RidgeError
        If the cube is all zero or fewer than ``k`` ridges stand above the
        floor; ``found`` carries how many did.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    mag = np.abs(tfc.values).astype(float)
    n_frames, ni, nj = mag.shape
    peak = mag.max() if mag.size else 0.0
    if not peak > 0:
        raise RidgeError("all-zero TFC representation: no ridges", found=0)
    freq = tfc.freq_axis
    cr = tfc.cr_axis
    df = freq[1] - freq[0] if freq.size > 1 else 1.0
    dcr = cr[1] - cr[0] if cr.size > 1 else 1.0
    dt = tfc.time_axis[1] - tfc.time_axis[0] if tfc.time_axis.size > 1 else 0.0
    step_per_cr = dt / df

    if jump_limit_hz is None:
        jump_limit_hz = max(3.0 * df, 1.25 * np.abs(cr).max() * dt)
    if jump_limit_hz <= 0:
        raise ValueError("jump_limit_hz must be positive")
    if peel_band_hz is not None and peel_band_hz <= 0:
        raise ValueError("peel_band_hz must be positive")
    ji = max(1, int(np.ceil(jump_limit_hz / df - 1e-9)))
    if nu is None:
        nu = (dcr * step_per_cr) ** 2 if cr.size > 1 else 1.0
    alpha = tfc.grid.window_param_alpha if tfc.grid is not None else None
    use_box = peel_band_hz is not None or peel_band_cr is not None or alpha is None
    if use_box:
        if peel_band_hz is None:
            peel_band_hz = 2.0 * df
        if peel_band_cr is None:
            peel_band_cr = 0.25 * (cr[-1] - cr[0]) if cr.size > 1 else 0.0

    floor = peak * 1e-12
    ref = max(float(np.median(mag)), floor)
    work_c = np.array(tfc.values, dtype=complex)
    work = mag.copy()
    frames = np.arange(n_frames)
    curves: list[RidgeCurve] = []
    for n in range(k):
        emission = np.log(np.maximum(work, floor) / ref)
        frame_peak = emission.reshape(n_frames, -1).max(axis=1)
        mu_n = mu if mu is not None else 0.1 * max(float(np.median(frame_peak)), 1e-3)
        ip, jp = _track(emission, cr, step_per_cr, mu_n, nu, ji, jj=cr_jump_bins)
        if np.median(work[frames, ip, jp]) < min_ridge_ratio * ref:
            raise RidgeError(
                f"requested {k} ridges but only {n} stand above the noise floor", found=n
            )
        if_hz = freq[ip].astype(float)
        if refine and ni >= 3:
            logm = np.log(np.maximum(work[frames, :, jp], floor))
            if_hz = if_hz + _parabolic_offsets(logm, ip) * df
        cr_hz = cr[jp].astype(float)
        if refine and nj >= 3:
            logm = np.log(np.maximum(work[frames, ip, :], floor))
            cr_hz = cr_hz + _parabolic_offsets(logm, jp) * dcr
        curves.append(RidgeCurve(tfc.time_axis.copy(), if_hz, cr_hz,
                                 mag[frames, ip, jp], float(df), float(dcr)))
        if n == k - 1:
            break
        if use_box:
            hi = peel_band_hz / df
            hj = peel_band_cr / dcr if cr.size > 1 else 0.0
            ii = np.arange(ni)[None, :, None]
            jj = np.arange(nj)[None, None, :]
            region = (np.abs(ii - ip[:, None, None]) <= hi + 1e-9) & (
                np.abs(jj - jp[:, None, None]) <= hj + 1e-9
            )
            work_c[region] = 0.0
        else:
            work_c -= _chirp_response(tfc, if_hz, cr[jp], work_c[frames, ip, jp], ip)
        work = np.abs(work_c)
    return curves


def _chirp_response(tfc: TFCRepresentation, f0, c0, value, ip) -> np.ndarray:
    """Chirplet response of per-frame real linear chirps ``(f0, c0)`` matching ``value`` at bin ``ip``.

    Uses the same (edge-truncated) window as the transform, so a linear chirp
    is removed exactly, side lobes, chirp-rate smear and the negative
    frequency image included.
    """
    grid = tfc.grid
    fs = tfc.sample_rate
    n = grid.window_len
    half = n // 2
    u = np.arange(-half, half + 1) / fs
    centers = np.rint((tfc.time_axis - tfc.time_axis[0]) * fs).astype(int)
    m = tfc.n_samples or int(centers[-1] + 1)
    pos = centers[:, None] + np.arange(-half, half + 1)[None, :]
    inside = (pos >= 0) & (pos < m)
    g = grid.window(fs)
    k = np.arange(tfc.freq_axis.size)
    tau = centers / fs
    phase = np.exp(2j * np.pi * half * k / n)[None, :] * np.exp(
        -2j * np.pi * np.outer(tau, tfc.freq_axis))
    chirps = np.exp(-1j * np.pi * np.outer(tfc.cr_axis, u**2))

    def unit(sign):
        # H(xi -/+ f0, beta -/+ c0) up to the common factor exp(-2j pi xi tau)
        atoms = inside * g * np.exp(sign * 2j * np.pi * (f0[:, None] * u + 0.5 * c0[:, None] * u**2))
        spec = np.fft.fft(atoms[:, None, :] * chirps[None, :, :], axis=-1)[..., : k.size]
        return np.transpose(spec, (0, 2, 1)) * phase[:, :, None]

    # a real chirp is z e^{j theta} + conj(z) e^{-j theta}; the mirror term
    # matters at low frequency and high chirp rate, where it leaks past DC
    pos_r, neg_r = unit(1.0), unit(-1.0)
    frames = np.arange(pos_r.shape[0])
    jc = np.argmin(np.abs(tfc.cr_axis[None, :] - c0[:, None]), axis=1)
    r1, r2 = pos_r[frames, ip, jc], neg_r[frames, ip, jc]
    safe = np.where(r1 == 0, 1, r1)
    z = np.where(np.abs(r1) > 0, value / safe, 0)
    z = np.where(np.abs(r1) > 0, (value - np.conj(z) * r2) / safe, 0)
    return pos_r * z[:, None, None] + neg_r * np.conj(z)[:, None, None]


@dataclass(frozen=True)
class RidgeEstimate:
    """Ridges, the chirplet cube they were read from, and how they were found.

    ``refined`` is True when the second, longer-window pass was kept.
    """

    curves: list[RidgeCurve]
    tfc: TFCRepresentation
    window_std_s: float
    refined: bool
    curvature_hzps2: float = 0.0


def estimate_ridges(x: Signal, k: int, window_std_s: float, max_window_std_s: float | None = None,
                    n_cr_bins: int = 41, curvature_phase_rad: float = 1.0,
                    agree_bins: float = 2.0, agree_fraction: float = 0.9,
                    pass2_nu_scale: float = 0.1) -> RidgeEstimate:
    """Two-pass ridge estimation with a data-driven chirplet window.

    Pass 1 tracks ridges with the short window ``window_std_s`` over the
    default chirp-rate axis. The IF curvature of those tracks gives the
    longest window over which the modes still look like linear chirps (cubic
    phase error at one standard deviation equal to ``curvature_phase_rad``).
    Pass 2 re-runs the tracker with that window and a chirp-rate axis sized
    from the pass-1 slopes; its finer chirp-rate resolution is what keeps
    slowly crossing modes apart. Pass 2 uses ``pass2_nu_scale`` times the
    default chirp-rate smoothness weight of :func:`detect_ridges`.

    Pass 2 is kept only if every pass-2 ridge stays within ``agree_bins``
    pass-1 frequency bins of one of the pass-1 ridges on at least
    ``agree_fraction`` of the pass-1 frames. Otherwise the pass-1 ridges are
    returned, with chirp rates reconciled by :func:`refine_cr_from_if` since
    the short window resolves chirp rate poorly.

    A Gaussian window of std ``s`` reads the IF (and chirp rate) averaged
    over a Gaussian of variance ``s^2 / 2``, which flattens curved tracks by
    about ``f'' s^2 / 4``. The returned tracks have that term added back,
    with ``f''`` taken from the tracks themselves.
    """
    fs = x.sample_rate
    L = x.duration
    if max_window_std_s is None:
        max_window_std_s = L / 10.0
    max_window_std_s = max(max_window_std_s, window_std_s)

    g1 = STFTGrid.from_alpha(window_std_s**2, fs)
    t1 = chirplet_transform(x, g1, default_cr_axis(fs, L, n_bins=n_cr_bins))
    c1 = detect_ridges(t1, k)
    dt1 = g1.hop / fs
    smooth1 = _smoothing_frames(window_std_s, dt1)
    c1 = [refine_cr_from_if(c, smooth1) for c in c1]
    curv, slope = _track_derivatives([c.if_hz for c in c1], dt1, smooth1)
    fallback = RidgeEstimate([_unblur(c, window_std_s, smooth1) for c in c1], t1,
                             window_std_s, False, curv)

    sigma2 = (3.0 * curvature_phase_rad / (np.pi * curv)) ** (1.0 / 3.0) if curv > 0 else np.inf
    sigma2 = float(np.clip(sigma2, window_std_s, max_window_std_s))
    g2 = STFTGrid.from_alpha(sigma2**2, fs)
    if sigma2 <= window_std_s or g2.window_len > x.m:
        return fallback
    # keep the chirp-rate axis a few resolution cells wide even for tones
    hint = max(slope, 3.0 / (2 * np.pi * sigma2**2))
    cr2 = default_cr_axis(fs, L, hint, n_bins=n_cr_bins)
    t2 = chirplet_transform(x, g2, cr2)
    dt2 = g2.hop / fs
    dcr2 = cr2[1] - cr2[0] if cr2.size > 1 else 1.0
    jj = max(2, int(np.ceil(1.5 * curv * dt2 / dcr2)))
    # the long window sees chirp rate swing fast at IF turning points; charge less for it
    nu2 = pass2_nu_scale * (dcr2 * dt2 / (t2.freq_axis[1] - t2.freq_axis[0])) ** 2
    try:
        c2 = detect_ridges(t2, k, cr_jump_bins=jj, nu=nu2)
    except RidgeError:
        return fallback
    if not _agree(c1, c2, agree_bins * c1[0].freq_bin_hz, agree_fraction):
        return fallback
    smooth2 = _smoothing_frames(sigma2, dt2)
    return RidgeEstimate([_unblur(c, sigma2, smooth2) for c in c2], t2, sigma2, True, curv)


def _unblur(curve: RidgeCurve, window_std_s: float, smoothing_window: int) -> RidgeCurve:
    """First-order undo of the window's Gaussian smoothing of IF and chirp rate."""
    if len(curve) < 5:
        return curve
    dt = float(np.mean(np.diff(curve.time_s)))
    k = window_std_s**2 / 4.0
    if_hz = curve.if_hz - k * _savgol_derivative(curve.if_hz, smoothing_window, dt, 2)
    cr = curve.cr_hzps - k * _savgol_derivative(curve.cr_hzps, smoothing_window, dt, 2)
    return replace(curve, if_hz=if_hz, cr_hzps=cr)


def _smoothing_frames(window_std_s: float, dt: float) -> int:
    """Odd frame count spanning about four window standard deviations."""
    return max(5, int(np.ceil(4 * window_std_s / dt)) | 1)


def _agree(ref: list[RidgeCurve], test: list[RidgeCurve], tol_hz: float, fraction: float) -> bool:
    """Whether each ``test`` ridge stays within ``tol_hz`` of *some* ``ref`` ridge.

    Identity is ignored frame by frame, so a ``ref`` set that swaps modes at
    a crossing still vouches for a ``test`` set that does not.
    """
    t = ref[0].time_s
    ref_if = np.array([a.if_hz for a in ref])
    for b in test:
        d = np.abs(ref_if - np.interp(t, b.time_s, b.if_hz)[None, :]).min(axis=0)
        if np.mean(d <= tol_hz) < fraction:
            return False
    return True


def _savgol_derivative(y: np.ndarray, window: int, dt: float, deriv: int = 1) -> np.ndarray:
    n = y.size
    w = min(window | 1, n if n % 2 else n - 1)
    order = min(3, w - 1)
    if w <= deriv or order < deriv:
        return np.gradient(y, dt) if deriv == 1 else np.zeros_like(y)
    return savgol_filter(y, w, order, deriv=deriv, delta=dt, mode="interp")


def _track_derivatives(tracks, dt: float, window: int) -> tuple[float, float]:
    """75th-percentile |f''| and 95th-percentile |f'| over all tracks.

    The curvature percentile is lower so a few frames of tracking jitter at
    a crossing do not pass for curvature.
    """
    curv, slope = 0.0, 0.0
    for f in tracks:
        if f.size < 5:
            continue
        d1 = _savgol_derivative(f, window, dt, 1)
        d2 = _savgol_derivative(f, window, dt, 2)
        curv = max(curv, float(np.percentile(np.abs(d2), 75)))
        slope = max(slope, float(np.percentile(np.abs(d1), 95)))
    return curv, slope


def refine_cr_from_if(curve: RidgeCurve, smoothing_window: int = 5,
                      tol_bins: float = 2.0, max_bad_fraction: float = 0.2) -> RidgeCurve:
    """Reconcile the CR track with the derivative of the IF track.

    ``d(if)/dt`` comes from a Savitzky-Golay fit over ``smoothing_window``
    frames (cubic, so linear and quadratic IF tracks are differentiated
    exactly). Frames where the raw CR is more than ``tol_bins`` chirp-rate
    bins away from it are *bad*. If more than ``max_bad_fraction`` of the
    frames are bad the whole CR track is replaced by the derivative;
    otherwise only the bad frames are.

    Returns the input object itself when no frame is bad.
    """
    if len(curve) == 0:
        raise ValueError("empty ridge curve")
    if len(curve) < 2:
        return curve
    dt = float(np.mean(np.diff(curve.time_s)))
    d_if = _savgol_derivative(curve.if_hz, max(3, smoothing_window), dt)
    bad = np.abs(curve.cr_hzps - d_if) > tol_bins * curve.cr_bin_hzps
    if not bad.any():
        return curve
    if bad.mean() > max_bad_fraction:
        return replace(curve, cr_hzps=d_if)
    cr = curve.cr_hzps.copy()
    cr[bad] = d_if[bad]
    return replace(curve, cr_hzps=cr)


def write_ridges_csv(path, curves: list[RidgeCurve]) -> None:
    """``frame,time_s,if_hz,cr_hzps,energy,mode_index``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "time_s", "if_hz", "cr_hzps", "energy", "mode_index"])
        for k, c in enumerate(curves):
            for f in range(len(c)):
                w.writerow([f, repr(float(c.time_s[f])), repr(float(c.if_hz[f])),
                            repr(float(c.cr_hzps[f])), repr(float(c.energy[f])), k])


def read_ridges_csv(path) -> list[RidgeCurve]:
    rows: dict[int, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["mode_index"]), []).append(row)
    curves = []
    for k in sorted(rows):
        r = sorted(rows[k], key=lambda d: int(d["frame"]))
        arr = {c: np.array([float(d[c]) for d in r]) for c in ("time_s", "if_hz", "cr_hzps", "energy")}
        curves.append(RidgeCurve(arr["time_s"], arr["if_hz"], arr["cr_hzps"], arr["energy"]))
    return curves
