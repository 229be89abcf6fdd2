"""EV-conditioned residual exposure head.

``z_e = z_base + f(z_base, phi(e))`` where ``phi`` is a Fourier embedding of
the exposure value, passed through a two-layer MLP, and ``f`` is a small
U-Net whose normalized feature maps are modulated per channel (FiLM) by
projections of that conditioning vector.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bracket import expose
from .latent import encode, sample
from .neural import ops
from .neural.optim import AdamConfig, ParamStore, adam_step
from .neural.tape import Tape, Var
from .neural import weights as weightfile
from .rng import SplitMix64, derive_seed, normal_stream

log = logging.getLogger(__name__)

EV_SPAN = 12.0      # width of the canonical [-7, 5] training range
OCTAVE_SPAN = 8.0   # the band frequencies cover this many octaves


def fourier_embed(ev: float, bands: int = 32) -> np.ndarray:
    """Interleaved (sin, cos) pairs at geometrically spaced frequencies.

    Band j uses frequency 2**(j * 8 / (bands - 1)) applied to ev * pi / 12.
    """
    if bands < 1:
        raise ValueError("bands must be >= 1")
    if not math.isfinite(ev):
        raise ValueError("exposure value must be finite")
    if bands == 1:
        freqs = np.ones(1)
    else:
        freqs = 2.0 ** (np.arange(bands) * OCTAVE_SPAN / (bands - 1))
    arg = freqs * (ev * math.pi / EV_SPAN)
    out = np.empty(2 * bands)
    out[0::2] = np.sin(arg)
    out[1::2] = np.cos(arg)
    return out


def film_modulate(features: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return ops.film_fwd(features, gamma, beta)[0]


@dataclass(frozen=True)
class HeadConfig:
    latent_channels: int = 48
    base_width: int = 16
    num_stages: int = 3
    width_mults: tuple = (1, 2, 4, 4)
    bands: int = 32
    cond_dim: int = 128
    groups: int = 4
    zero_init_final: bool = True
    use_film: bool = True
    film_bottleneck: bool = True
    # un-normalized FiLM on the stem, carried to the output by a long skip
    input_path: bool = False
    # no-FiLM variant: one residual per grid EV, stacked along channels
    ev_grid: tuple = ()

    def __post_init__(self):
        if len(self.width_mults) != self.num_stages + 1:
            raise ValueError("width_mults needs one entry per level (num_stages + 1)")
        for w in self.widths:
            if w % self.groups:
                raise ValueError(f"width {w} not divisible by {self.groups} groups")
        if not self.use_film and not self.ev_grid:
            raise ValueError("a head without FiLM needs a fixed ev_grid")

    @property
    def widths(self) -> list[int]:
        return [self.base_width * m for m in self.width_mults]

    @property
    def out_channels(self) -> int:
        return self.latent_channels * (1 if self.use_film else len(self.ev_grid))

    def film_sites(self) -> list[tuple[str, int]]:
        """(name, channels) for every FiLM-modulated feature map."""
        if not self.use_film:
            return []
        w = self.widths
        sites = []
        if self.input_path:
            sites.append(("stem", w[0]))
        sites += [(f"enc{s}", w[s]) for s in range(1, self.num_stages + 1)]
        if self.film_bottleneck:
            sites += [(f"mid{b}.n{k}", w[-1]) for b in range(2) for k in range(2)]
        sites += [(f"dec{s}", w[s - 1]) for s in range(self.num_stages, 0, -1)]
        return sites

    def to_vector(self) -> np.ndarray:
        return np.array([self.latent_channels, self.base_width, self.num_stages, self.bands,
                         self.cond_dim, self.groups, self.zero_init_final, self.use_film,
                         self.film_bottleneck, self.input_path, *self.width_mults], dtype=np.float64)

    @classmethod
    def from_vector(cls, vec, ev_grid=()) -> "HeadConfig":
        v = [int(round(x)) for x in vec]
        return cls(latent_channels=v[0], base_width=v[1], num_stages=v[2], bands=v[3],
                   cond_dim=v[4], groups=v[5], zero_init_final=bool(v[6]), use_film=bool(v[7]),
                   film_bottleneck=bool(v[8]), input_path=bool(v[9]), width_mults=tuple(v[10:]),
                   ev_grid=tuple(float(e) for e in ev_grid))


def ablate_no_film(cfg: HeadConfig, evs) -> HeadConfig:
    """The unconditioned variant: predicts every grid EV's residual in one pass."""
    return replace(cfg, use_film=False, ev_grid=tuple(float(e) for e in evs))


def tiny_config() -> HeadConfig:
    """Smallest head with the full topology, for finite-difference checks."""
    return HeadConfig(latent_channels=12, base_width=4, width_mults=(1, 1, 1, 1),
                      bands=4, cond_dim=8, groups=2)


def _init_tensor(seed: int, name: str, shape, std: float) -> np.ndarray:
    size = int(np.prod(shape))
    key = zlib.crc32(name.encode("utf-8"))
    return std * normal_stream(derive_seed(seed, key), size).reshape(shape)


class ExposureHead:
    def __init__(self, cfg: HeadConfig, store: ParamStore):
        self.cfg = cfg
        self.store = store

    @classmethod
    def init(cls, cfg: HeadConfig, seed: int = 0) -> "ExposureHead":
        store = ParamStore()
        w = cfg.widths

        def conv(name, c_in, c_out, zero=False):
            std = 0.0 if zero else math.sqrt(2.0 / (9 * c_in))
            store.add(f"{name}.w", _init_tensor(seed, f"{name}.w", (c_out, c_in, 3, 3), std))
            store.add(f"{name}.b", np.zeros(c_out))

        def norm(name, c):
            store.add(f"{name}.gn.g", np.ones(c))
            store.add(f"{name}.gn.b", np.zeros(c))

        if cfg.use_film:
            d_in = 2 * cfg.bands
            store.add("mlp.fc1.w", _init_tensor(seed, "mlp.fc1.w", (cfg.cond_dim, d_in), math.sqrt(1.0 / d_in)))
            store.add("mlp.fc1.b", np.zeros(cfg.cond_dim))
            store.add("mlp.fc2.w", _init_tensor(seed, "mlp.fc2.w", (cfg.cond_dim, cfg.cond_dim),
                                                math.sqrt(1.0 / cfg.cond_dim)))
            store.add("mlp.fc2.b", np.zeros(cfg.cond_dim))
            for site, ch in cfg.film_sites():
                name = f"film.{site}.w"
                store.add(name, _init_tensor(seed, name, (2 * ch, cfg.cond_dim), 0.1 / math.sqrt(cfg.cond_dim)))
                store.add(f"film.{site}.b", np.zeros(2 * ch))

        conv("stem", cfg.latent_channels, w[0])
        for s in range(1, cfg.num_stages + 1):
            conv(f"enc{s}", w[s - 1], w[s])
            norm(f"enc{s}", w[s])
        for b in range(2):
            for k in range(2):
                norm(f"mid{b}.n{k}", w[-1])
                conv(f"mid{b}.c{k}", w[-1], w[-1])
        for s in range(cfg.num_stages, 0, -1):
            conv(f"dec{s}", w[s] + w[s - 1], w[s - 1])
            norm(f"dec{s}", w[s - 1])
        conv("out", w[0], cfg.out_channels, zero=cfg.zero_init_final)
        return cls(cfg, store)

    # -- forward -----------------------------------------------------------

    def cond_vector(self, tape: Tape, ev: float) -> Var:
        """Two-layer MLP over the Fourier embedding: linear, SiLU, linear."""
        p = tape.param
        emb = Var(fourier_embed(ev, self.cfg.bands))
        hidden = tape.silu(tape.linear(emb, p("mlp.fc1.w"), p("mlp.fc1.b")))
        return tape.linear(hidden, p("mlp.fc2.w"), p("mlp.fc2.b"))

    def _conditioning(self, tape: Tape, ev: float) -> dict:
        cfg = self.cfg
        if not cfg.use_film:
            return {}
        p = tape.param
        cond = self.cond_vector(tape, ev)
        out = {}
        for site, ch in cfg.film_sites():
            gb = tape.linear(cond, p(f"film.{site}.w"), p(f"film.{site}.b"))
            out[site] = (tape.add_const(tape.slice(gb, 0, ch), 1.0), tape.slice(gb, ch, 2 * ch))
        return out

    def _norm_act(self, tape: Tape, x: Var, name: str, film: dict, site: str) -> Var:
        p = tape.param
        h = tape.groupnorm(x, p(f"{name}.gn.g"), p(f"{name}.gn.b"), self.cfg.groups)
        if site in film:
            h = tape.film(h, *film[site])
        return tape.silu(h)

    def residual(self, tape: Tape, z: Var, ev: float) -> Var:
        """The U-Net output: one residual (FiLM) or a stack of N residuals (no FiLM)."""
        cfg = self.cfg
        p = tape.param
        film = self._conditioning(tape, ev)

        h0 = tape.conv2d(z, p("stem.w"), p("stem.b"))
        if cfg.input_path:
            if "stem" in film:
                h0 = tape.film(h0, *film["stem"])
            h0 = tape.silu(h0)
        skips = [h0]
        h = h0
        for s in range(1, cfg.num_stages + 1):
            h = tape.conv2d(h, p(f"enc{s}.w"), p(f"enc{s}.b"), stride=2)
            h = self._norm_act(tape, h, f"enc{s}", film, f"enc{s}")
            skips.append(h)
        for b in range(2):
            r = h
            for k in range(2):
                r = self._norm_act(tape, r, f"mid{b}.n{k}", film, f"mid{b}.n{k}")
                r = tape.conv2d(r, p(f"mid{b}.c{k}.w"), p(f"mid{b}.c{k}.b"))
            h = tape.add(h, r)
        for s in range(cfg.num_stages, 0, -1):
            h = tape.concat(tape.upsample2x(h), skips[s - 1])
            h = tape.conv2d(h, p(f"dec{s}.w"), p(f"dec{s}.b"))
            h = self._norm_act(tape, h, f"dec{s}", film, f"dec{s}")
        if cfg.input_path:
            h = tape.add(h, h0)
        return tape.conv2d(h, p("out.w"), p("out.b"))

    def ev_index(self, ev: float) -> int:
        for i, g in enumerate(self.cfg.ev_grid):
            if abs(g - ev) < 1e-9:
                return i
        raise KeyError(f"EV {ev} is not on this head's grid {self.cfg.ev_grid}")

    def forward(self, tape: Tape, z: Var, ev: float) -> Var:
        """Predicted exposure latent z + residual for one EV."""
        self._check_shape(z.value)
        res = self.residual(tape, z, ev)
        if not self.cfg.use_film:
            c = self.cfg.latent_channels
            i = self.ev_index(ev)
            res = tape.slice(res, i * c, (i + 1) * c)
        return tape.add(z, res)

    def _check_shape(self, z: np.ndarray):
        cfg = self.cfg
        down = 2 ** cfg.num_stages
        if z.ndim != 3 or z.shape[0] != cfg.latent_channels:
            raise ValueError(f"latent shape {z.shape} does not match head with {cfg.latent_channels} channels")
        if z.shape[1] % down or z.shape[2] % down:
            raise ValueError(f"latent spatial size {z.shape[1:]} must be divisible by {down}")

    def predict(self, z_base: np.ndarray, ev: float) -> np.ndarray:
        tape = Tape(self.store)
        return self.forward(tape, Var(z_base), ev).value

    def predict_stack(self, z_base: np.ndarray, evs) -> list[np.ndarray]:
        if self.cfg.use_film:
            return [self.predict(z_base, e) for e in evs]
        self._check_shape(z_base)
        tape = Tape(self.store)
        res = self.residual(tape, Var(z_base), 0.0).value
        c = self.cfg.latent_channels
        return [z_base + res[self.ev_index(e) * c:(self.ev_index(e) + 1) * c] for e in evs]

    __call__ = predict

    # -- persistence -------------------------------------------------------

    def to_tensors(self) -> dict:
        out = {f"param/{k}": v for k, v in self.store.params.items()}
        out["meta/config"] = self.cfg.to_vector()
        out["meta/ev_grid"] = np.array(self.cfg.ev_grid, dtype=np.float64)
        return out

    def save(self, path) -> None:
        weightfile.save(path, self.to_tensors())

    @classmethod
    def from_tensors(cls, tensors: dict) -> "ExposureHead":
        try:
            cfg = HeadConfig.from_vector(tensors["meta/config"], tensors.get("meta/ev_grid", ()))
        except KeyError as exc:
            raise ValueError("weight file lacks head configuration") from exc
        reference = cls.init(cfg, 0).store
        store = ParamStore()
        for name, ref in reference.params.items():
            key = f"param/{name}"
            if key not in tensors:
                raise ValueError(f"weight file is missing parameter {name}")
            if tensors[key].shape != ref.shape:
                raise ValueError(f"parameter {name} has shape {tensors[key].shape}, expected {ref.shape}")
            store.add(name, tensors[key])
        return cls(cfg, store)

    @classmethod
    def load(cls, path) -> "ExposureHead":
        return cls.from_tensors(weightfile.load(path))


def loss_ev(preds, targets) -> float:
    """Mean over exposures of the summed squared latent error."""
    preds, targets = list(preds), list(targets)
    if len(preds) != len(targets):
        raise ValueError(f"{len(preds)} predictions vs {len(targets)} targets")
    if not preds:
        raise ValueError("loss_ev needs at least one pair")
    total = 0.0
    for p, t in zip(preds, targets):
        if p.shape != t.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
        total += float(np.sum((p - t) ** 2))
    return total / len(preds)


# -- training ---------------------------------------------------------------

@dataclass
class TrainData:
    """Posterior means of each scene's bracket, keyed by EV index."""

    evs: list
    base: list                  # per scene: Posterior at EV 0
    targets: list               # per scene: list of mu arrays aligned with evs


def prepare_data(corpus, evs, factor: int = 4, sigma0: float = 1e-4) -> TrainData:
    evs = [float(e) for e in evs]
    if not any(abs(e) < 1e-9 for e in evs):
        raise ValueError("training EV list must contain EV 0 (the base exposure)")
    base, targets = [], []
    for scene in corpus:
        base.append(encode(expose(scene, 0.0), factor, sigma0))
        targets.append([encode(expose(scene, e), factor, sigma0).mu for e in evs])
    return TrainData(evs, base, targets)


def _pair_schedule(seed: int, n_scenes: int, n_evs: int):
    """Endless epochs over all (scene, ev) pairs, each epoch Fisher-Yates shuffled."""
    epoch = 0
    pairs = [(s, i) for s in range(n_scenes) for i in range(n_evs)]
    while True:
        rng = SplitMix64(derive_seed(seed, 7, epoch))
        order = list(pairs)
        for k in range(len(order) - 1, 0, -1):
            j = rng.next_u64() % (k + 1)
            order[k], order[j] = order[j], order[k]
        yield from order
        epoch += 1


@dataclass
class TrainResult:
    head: ExposureHead
    trace: list = field(default_factory=list)


def step_loss(head: ExposureHead, z_base: np.ndarray, pairs, backward: bool = True) -> float:
    """loss_ev over (ev, target) pairs for one scene; accumulates grads if asked."""
    tape = Tape(head.store)
    z = Var(z_base)
    total = None
    for ev, target in pairs:
        err = tape.sq_error(head.forward(tape, z, ev), target)
        total = err if total is None else tape.add(total, err)
    total = tape.scale(total, 1.0 / len(pairs))
    if backward:
        tape.backward(total)
    return float(total.value)


def train(corpus, evs, cfg: HeadConfig, opt: AdamConfig = AdamConfig(), steps: int = 5000,
          seed: int = 0, *, factor: int = 4, sigma0: float = 1e-4, sampled_z: bool = False,
          full_bracket: bool = False, data: TrainData | None = None,
          head: ExposureHead | None = None) -> TrainResult:
    """Fit the head with Adam at batch size 1.

    Each step takes the next (scene, EV) pair from a seeded shuffle, or a whole
    scene's bracket when ``full_bracket`` is set. With ``sampled_z`` the base
    latent is drawn from the EV-0 posterior instead of using its mean.
    """
    data = data or prepare_data(corpus, evs, factor, sigma0)
    if cfg.latent_channels != data.base[0].mu.shape[0]:
        raise ValueError(f"head expects {cfg.latent_channels} latent channels, "
                         f"data has {data.base[0].mu.shape[0]}")
    if not cfg.use_film and tuple(data.evs) != tuple(cfg.ev_grid):
        raise ValueError("no-FiLM head grid differs from the training EVs")
    head = head or ExposureHead.init(cfg, derive_seed(seed, 1))
    trace = []
    n_scenes = len(data.base)
    if full_bracket:
        schedule = ((s % n_scenes, None) for s in _scene_schedule(seed, n_scenes))
    else:
        schedule = _pair_schedule(seed, n_scenes, len(data.evs))
    for step in range(steps):
        s, i = next(schedule)
        post = data.base[s]
        z_base = sample(post, derive_seed(seed, 11, step)) if sampled_z else post.mu
        if i is None:
            pairs = list(zip(data.evs, data.targets[s]))
        else:
            pairs = [(data.evs[i], data.targets[s][i])]
        loss = step_loss(head, z_base, pairs)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at step {step} (scene {s}, ev index {i})")
        adam_step(head.store, opt.lr, opt.beta1, opt.beta2, opt.eps)
        trace.append(loss)
        if step % 500 == 0:
            log.debug("step %d loss %.6g", step, loss)
    return TrainResult(head, trace)


def _scene_schedule(seed: int, n_scenes: int):
    epoch = 0
    while True:
        rng = SplitMix64(derive_seed(seed, 9, epoch))
        order = list(range(n_scenes))
        for k in range(n_scenes - 1, 0, -1):
            j = rng.next_u64() % (k + 1)
            order[k], order[j] = order[j], order[k]
        yield from order
        epoch += 1


def eval_loss(head: ExposureHead, data: TrainData) -> float:
    """Mean of loss_ev over scenes, using every EV of each bracket."""
    losses = []
    for post, targets in zip(data.base, data.targets):
        preds = head.predict_stack(post.mu, data.evs)
        losses.append(loss_ev(preds, targets))
    return float(np.mean(losses))


def config_dict(cfg: HeadConfig) -> dict:
    return asdict(cfg)
