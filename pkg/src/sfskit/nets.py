"""The three decomposition architectures.

Every model maps an image batch (B, 3, H, W) to a DecompositionOutput:
an unnormalized normal map, an unclamped albedo map (both at input
resolution) and 27 lighting coefficients.

sfsnet      Feature conv stack, two unshared pre-activation residual
            stacks (normal / albedo), upsampling heads, and a light
            estimator over the concatenated image+normal+albedo features.
            Plain ReLU.
skipnet     Five stride-2 k4 encoder stages to a fully connected 256-d
            bottleneck, per-branch fully connected layers, decoders of
            stride-2 deconvolutions with encoder skip concatenations.
            Leaky ReLU, slope 0.2.
skipnet+    Fully convolutional: k3 stride-2 stages interleaved with k1
            stride-1 stages, no fully connected bottleneck; the light head
            average-pools the encoder output. Leaky ReLU, slope 0.3.

Skip wiring, where the source tables leave it implicit, pairs each
stride-2 encoder output with the decoder stage working at the same
resolution, by channel concatenation (the bottleneck-resolution feature
included).

Channel counts scale by cfg.width_scale; the output heads (3 map
channels, 27 light dims) never scale. Weights draw from N(0, 2/fan_in),
biases start at zero. Each builder consumes its seed in a fixed layer
order, so a (seed, cfg) pair names one exact parameter set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .types import N_SH_RGB

ARCH_NAMES = ("sfsnet", "skipnet", "skipnet+")

# Channel counts whose scaled versions must stay integral.
_BASE_WIDTHS = (64, 128, 256)


@dataclass(frozen=True)
class NetConfig:
    """Resolution and width knobs shared by all three architectures.

    input_size=128, width_scale=1.0 reproduces the published layer tables
    letter for letter; the defaults are the desk-scale half-size setting.
    """

    input_size: int = 64
    width_scale: float = 0.5
    n_resblocks: int = 5

    def __post_init__(self):
        if self.input_size <= 0 or self.input_size % 32 != 0:
            raise ValueError(f"input_size must be a positive multiple of 32, got {self.input_size}")
        if self.width_scale <= 0:
            raise ValueError(f"width_scale must be positive, got {self.width_scale}")
        for base in _BASE_WIDTHS:
            scaled = base * self.width_scale
            if abs(scaled - round(scaled)) > 1e-9 or round(scaled) < 1:
                raise ValueError(f"width_scale {self.width_scale} does not keep {base} channels integral")
        if self.n_resblocks < 1:
            raise ValueError("n_resblocks must be >= 1")

    def width(self, base: int) -> int:
        return int(round(base * self.width_scale))

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "width_scale": self.width_scale,
            "n_resblocks": self.n_resblocks,
        }

    @staticmethod
    def from_dict(d: dict) -> "NetConfig":
        return NetConfig(
            input_size=int(d["input_size"]),
            width_scale=float(d["width_scale"]),
            n_resblocks=int(d["n_resblocks"]),
        )


@dataclass
class DecompositionOutput:
    """Raw network heads: normals are unnormalized, albedo unclamped."""

    normal: Tensor
    albedo: Tensor
    light: Tensor


# ---------------------------------------------------------------------------
# Layers


class _Conv:
    def __init__(self, name: str, rng, cin: int, cout: int, k: int, stride: int = 1):
        std = np.sqrt(2.0 / (cin * k * k))
        self.stride = stride
        self.w = Parameter(name + ".w", rng.normal(0.0, std, (cout, cin, k, k)).astype(np.float32))
        self.b = Parameter(name + ".b", np.zeros(cout, dtype=np.float32))

    def __call__(self, x):
        return ad.conv2d(x, self.w, self.b, stride=self.stride)

    def params(self):
        return [self.w, self.b]


class _Deconv:
    def __init__(self, name: str, rng, cin: int, cout: int):
        std = np.sqrt(2.0 / (cin * 16))
        self.w = Parameter(name + ".w", rng.normal(0.0, std, (cin, cout, 4, 4)).astype(np.float32))
        self.b = Parameter(name + ".b", np.zeros(cout, dtype=np.float32))

    def __call__(self, x):
        return ad.conv_transpose2d(x, self.w, self.b)

    def params(self):
        return [self.w, self.b]


class _BatchNorm:
    def __init__(self, name: str, c: int):
        self.name = name
        self.gamma = Parameter(name + ".gamma", np.ones(c, dtype=np.float32))
        self.beta = Parameter(name + ".beta", np.zeros(c, dtype=np.float32))
        self.running_mean = np.zeros(c, dtype=np.float32)
        self.running_var = np.ones(c, dtype=np.float32)

    def __call__(self, x, train: bool):
        return ad.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, train)

    def params(self):
        return [self.gamma, self.beta]

    def state(self):
        return {
            self.name + ".running_mean": self.running_mean,
            self.name + ".running_var": self.running_var,
        }


class _Linear:
    def __init__(self, name: str, rng, fin: int, fout: int):
        std = np.sqrt(2.0 / fin)
        self.w = Parameter(name + ".w", rng.normal(0.0, std, (fout, fin)).astype(np.float32))
        self.b = Parameter(name + ".b", np.zeros(fout, dtype=np.float32))

    def __call__(self, x):
        return ad.fully_connected(x, self.w, self.b)

    def params(self):
        return [self.w, self.b]


# ---------------------------------------------------------------------------
# Model base: parameter bookkeeping, state I/O, shape auditing


class Model:
    """Common plumbing: parameter registry, shape plan, checkpoint state."""

    arch: str

    def __init__(self, cfg: NetConfig):
        self.cfg = cfg
        self._layers: list = []
        self._bns: list[_BatchNorm] = []
        # (layer name, expected output (C, H, W) or (F,)) in forward order.
        self.plan: list[tuple[str, tuple]] = []
        self.last_shapes: dict[str, tuple] = {}

    def _reg(self, layer):
        self._layers.append(layer)
        if isinstance(layer, _BatchNorm):
            self._bns.append(layer)
        return layer

    def params(self) -> list[Parameter]:
        out = []
        for layer in self._layers:
            out.extend(layer.params())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        entries = {p.name: p.data for p in self.params()}
        for bn in self._bns:
            entries.update(bn.state())
        return entries

    def load_state_dict(self, entries: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = sorted(set(own) - set(entries))
        if missing:
            raise ValueError(f"checkpoint is missing entries: {missing[:4]}{'...' if len(missing) > 4 else ''}")
        for p in self.params():
            incoming = np.asarray(entries[p.name], dtype=np.float32)
            if incoming.shape != p.data.shape:
                raise ValueError(f"{p.name}: shape {incoming.shape} does not match {p.data.shape}")
            p.data = incoming.copy()
        for bn in self._bns:
            bn.running_mean[:] = entries[bn.name + ".running_mean"]
            bn.running_var[:] = entries[bn.name + ".running_var"]

    def _trace(self, name: str, t: Tensor) -> Tensor:
        self.last_shapes[name] = tuple(t.data.shape[1:])
        return t

    def audit(self, batch: int = 1) -> list[tuple[str, tuple, tuple]]:
        """Run a zero forward and compare every planned shape to the
        executed one. Returns (name, declared, actual) rows."""
        x = Tensor(np.zeros((batch, 3, self.cfg.input_size, self.cfg.input_size), dtype=np.float32))
        self.forward(x, train=False)
        rows = []
        for name, want in self.plan:
            rows.append((name, want, self.last_shapes.get(name, ())))
        return rows

    def forward(self, x, train: bool = False) -> DecompositionOutput:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# SfSNet


class SfSNet(Model):
    arch = "sfsnet"

    def __init__(self, cfg: NetConfig, seed: int = 0):
        super().__init__(cfg)
        rng = np.random.default_rng(seed)
        r = self._reg
        c64, c128 = cfg.width(64), cfg.width(128)
        half = cfg.input_size // 2

        self.conv1 = r(_Conv("conv1", rng, 3, c64, k=7))
        self.bn1 = r(_BatchNorm("bn1", c64))
        self.conv2 = r(_Conv("conv2", rng, c64, c128, k=3))
        self.bn2 = r(_BatchNorm("bn2", c128))
        # Stride-2 feature conv: bare convolution, no BN/ReLU; the
        # pre-activation residual stacks normalize it themselves.
        self.conv3 = r(_Conv("conv3", rng, c128, c128, k=3, stride=2))

        def resstack(tag):
            blocks = []
            for i in range(cfg.n_resblocks):
                pre = f"{tag}.res{i}"
                blocks.append(
                    (
                        r(_BatchNorm(pre + ".bn1", c128)),
                        r(_Conv(pre + ".conv1", rng, c128, c128, k=3)),
                        r(_BatchNorm(pre + ".bn2", c128)),
                        r(_Conv(pre + ".conv2", rng, c128, c128, k=3)),
                    )
                )
            tail = r(_BatchNorm(f"{tag}.bn_out", c128))
            return blocks, tail

        self.normal_blocks, self.normal_tail = resstack("normal")
        self.albedo_blocks, self.albedo_tail = resstack("albedo")

        def head(tag):
            return (
                r(_Conv(f"{tag}.conv1", rng, c128, c128, k=1)),
                r(_BatchNorm(f"{tag}.bn1", c128)),
                r(_Conv(f"{tag}.conv2", rng, c128, c64, k=3)),
                r(_BatchNorm(f"{tag}.bn2", c64)),
                r(_Conv(f"{tag}.out", rng, c64, 3, k=1)),
            )

        self.normal_head = head("normal_head")
        self.albedo_head = head("albedo_head")

        self.light_conv = r(_Conv("light.conv", rng, 3 * c128, c128, k=1))
        self.light_bn = r(_BatchNorm("light.bn", c128))
        self.light_fc = r(_Linear("light.fc", rng, c128, N_SH_RGB))

        s = cfg.input_size
        self.plan = [
            ("conv1", (c64, s, s)),
            ("conv2", (c128, s, s)),
            ("conv3", (c128, half, half)),
            ("normal_features", (c128, half, half)),
            ("albedo_features", (c128, half, half)),
            ("light_features", (3 * c128, half, half)),
            ("normal", (3, s, s)),
            ("albedo", (3, s, s)),
            ("light", (N_SH_RGB,)),
        ]

    def _resstack(self, h, blocks, tail, train):
        for bn1, conv1, bn2, conv2 in blocks:
            t = conv1(ad.relu(bn1(h, train)))
            t = conv2(ad.relu(bn2(t, train)))
            h = ad.add(h, t)
        return ad.relu(tail(h, train))

    def _head(self, h, head, train):
        conv1, bn1, conv2, bn2, out = head
        h = ad.bilinear_upsample2x(h)
        h = ad.relu(bn1(conv1(h), train))
        h = ad.relu(bn2(conv2(h), train))
        return out(h)

    def forward(self, x, train: bool = False) -> DecompositionOutput:
        h = ad.relu(self.bn1(self._trace("conv1", self.conv1(x)), train))
        h = ad.relu(self.bn2(self._trace("conv2", self.conv2(h)), train))
        i_f = self._trace("conv3", self.conv3(h))
        n_f = self._trace("normal_features", self._resstack(i_f, self.normal_blocks, self.normal_tail, train))
        a_f = self._trace("albedo_features", self._resstack(i_f, self.albedo_blocks, self.albedo_tail, train))

        normal = self._trace("normal", self._head(n_f, self.normal_head, train))
        albedo = self._trace("albedo", self._head(a_f, self.albedo_head, train))

        lf = self._trace("light_features", ad.concat_channels(i_f, n_f, a_f))
        lf = ad.relu(self.light_bn(self.light_conv(lf), train))
        light = self._trace("light", self.light_fc(ad.global_avg_pool(lf)))
        return DecompositionOutput(normal=normal, albedo=albedo, light=light)


# ---------------------------------------------------------------------------
# SkipNet


class SkipNet(Model):
    arch = "skipnet"
    slope = 0.2

    def __init__(self, cfg: NetConfig, seed: int = 0):
        super().__init__(cfg)
        rng = np.random.default_rng(seed)
        r = self._reg
        c64, c128, c256 = cfg.width(64), cfg.width(128), cfg.width(256)
        self.bott = cfg.input_size // 32

        # First encoder stage skips batch norm.
        self.enc1 = r(_Conv("enc1", rng, 3, c64, k=4, stride=2))
        self.enc2 = r(_Conv("enc2", rng, c64, c128, k=4, stride=2))
        self.enc2_bn = r(_BatchNorm("enc2.bn", c128))
        self.enc3 = r(_Conv("enc3", rng, c128, c256, k=4, stride=2))
        self.enc3_bn = r(_BatchNorm("enc3.bn", c256))
        self.enc4 = r(_Conv("enc4", rng, c256, c256, k=4, stride=2))
        self.enc4_bn = r(_BatchNorm("enc4.bn", c256))
        self.enc5 = r(_Conv("enc5", rng, c256, c256, k=4, stride=2))
        self.enc5_bn = r(_BatchNorm("enc5.bn", c256))
        self.enc_fc = r(_Linear("enc_fc", rng, c256 * self.bott * self.bott, c256))

        self.mlp_normal = r(_Linear("mlp.normal", rng, c256, c256))
        self.mlp_albedo = r(_Linear("mlp.albedo", rng, c256, c256))
        self.mlp_light = r(_Linear("mlp.light", rng, c256, c256))
        self.light_fc = r(_Linear("light.fc", rng, c256, N_SH_RGB))

        def decoder(tag):
            return (
                r(_Deconv(f"{tag}.d1", rng, 2 * c256, c256)),
                r(_BatchNorm(f"{tag}.d1.bn", c256)),
                r(_Deconv(f"{tag}.d2", rng, 2 * c256, c256)),
                r(_BatchNorm(f"{tag}.d2.bn", c256)),
                r(_Deconv(f"{tag}.d3", rng, 2 * c256, c256)),
                r(_BatchNorm(f"{tag}.d3.bn", c256)),
                r(_Deconv(f"{tag}.d4", rng, c256 + c128, c128)),
                r(_BatchNorm(f"{tag}.d4.bn", c128)),
                r(_Deconv(f"{tag}.d5", rng, c128 + c64, c64)),
                r(_BatchNorm(f"{tag}.d5.bn", c64)),
                r(_Conv(f"{tag}.out", rng, c64, 3, k=1)),
            )

        self.normal_dec = decoder("normal_dec")
        self.albedo_dec = decoder("albedo_dec")

        s, b = cfg.input_size, self.bott
        self.plan = [
            ("enc1", (c64, s // 2, s // 2)),
            ("enc2", (c128, s // 4, s // 4)),
            ("enc3", (c256, s // 8, s // 8)),
            ("enc4", (c256, s // 16, s // 16)),
            ("enc5", (c256, b, b)),
            ("bottleneck", (c256,)),
            ("normal", (3, s, s)),
            ("albedo", (3, s, s)),
            ("light", (N_SH_RGB,)),
        ]

    def _decode(self, branch, skips, dec):
        lk = lambda t: ad.leaky_relu(t, self.slope)
        e1, e2, e3, e4, e5 = skips
        d1, d1bn, d2, d2bn, d3, d3bn, d4, d4bn, d5, d5bn, out = dec
        h = ad.broadcast_spatial(branch, self.bott, self.bott)
        h = lk(d1bn(d1(ad.concat_channels(h, e5)), self._train))
        h = lk(d2bn(d2(ad.concat_channels(h, e4)), self._train))
        h = lk(d3bn(d3(ad.concat_channels(h, e3)), self._train))
        h = lk(d4bn(d4(ad.concat_channels(h, e2)), self._train))
        h = lk(d5bn(d5(ad.concat_channels(h, e1)), self._train))
        return out(h)

    def forward(self, x, train: bool = False) -> DecompositionOutput:
        self._train = train
        lk = lambda t: ad.leaky_relu(t, self.slope)
        e1 = self._trace("enc1", lk(self.enc1(x)))
        e2 = self._trace("enc2", lk(self.enc2_bn(self.enc2(e1), train)))
        e3 = self._trace("enc3", lk(self.enc3_bn(self.enc3(e2), train)))
        e4 = self._trace("enc4", lk(self.enc4_bn(self.enc4(e3), train)))
        e5 = self._trace("enc5", lk(self.enc5_bn(self.enc5(e4), train)))
        z = self._trace("bottleneck", lk(self.enc_fc(ad.flatten(e5))))

        skips = (e1, e2, e3, e4, e5)
        normal = self._trace("normal", self._decode(lk(self.mlp_normal(z)), skips, self.normal_dec))
        albedo = self._trace("albedo", self._decode(lk(self.mlp_albedo(z)), skips, self.albedo_dec))
        light = self._trace("light", self.light_fc(lk(self.mlp_light(z))))
        return DecompositionOutput(normal=normal, albedo=albedo, light=light)


# ---------------------------------------------------------------------------
# SkipNet+


class SkipNetPlus(Model):
    arch = "skipnet+"
    slope = 0.3

    def __init__(self, cfg: NetConfig, seed: int = 0):
        super().__init__(cfg)
        rng = np.random.default_rng(seed)
        r = self._reg
        c64, c128, c256 = cfg.width(64), cfg.width(128), cfg.width(256)
        self.bott = cfg.input_size // 32

        def cbr(name, cin, cout, k, stride):
            return (r(_Conv(name, rng, cin, cout, k=k, stride=stride)), r(_BatchNorm(name + ".bn", cout)))

        # Stride-1 k3/k1 stages interleaved with the five stride-2 k3 stages.
        self.p1 = cbr("p1", 3, c64, 3, 1)
        self.p2 = cbr("p2", c64, c64, 1, 1)
        self.s1 = cbr("s1", c64, c64, 3, 2)
        self.p3 = cbr("p3", c64, c64, 1, 1)
        self.s2 = cbr("s2", c64, c128, 3, 2)
        self.p4 = cbr("p4", c128, c128, 1, 1)
        self.s3 = cbr("s3", c128, c256, 3, 2)
        self.p5 = cbr("p5", c256, c256, 1, 1)
        self.s4 = cbr("s4", c256, c256, 3, 2)
        self.p6 = cbr("p6", c256, c256, 1, 1)
        self.s5 = cbr("s5", c256, c256, 3, 2)

        def decoder(tag):
            return (
                cbr(f"{tag}.c0", c256, c256, 1, 1),
                r(_Deconv(f"{tag}.d1", rng, 2 * c256, c256)),
                r(_BatchNorm(f"{tag}.d1.bn", c256)),
                r(_Deconv(f"{tag}.d2", rng, 2 * c256, c256)),
                r(_BatchNorm(f"{tag}.d2.bn", c256)),
                r(_Deconv(f"{tag}.d3", rng, 2 * c256, c256)),
                r(_BatchNorm(f"{tag}.d3.bn", c256)),
                r(_Deconv(f"{tag}.d4", rng, c256 + c128, c128)),
                r(_BatchNorm(f"{tag}.d4.bn", c128)),
                r(_Deconv(f"{tag}.d5", rng, c128 + c64, c64)),
                r(_BatchNorm(f"{tag}.d5.bn", c64)),
                r(_Conv(f"{tag}.out", rng, c64, 3, k=1)),
            )

        self.normal_dec = decoder("normal_dec")
        self.albedo_dec = decoder("albedo_dec")
        self.light_fc = r(_Linear("light.fc", rng, c256, N_SH_RGB))

        s, b = cfg.input_size, self.bott
        self.plan = [
            ("s1", (c64, s // 2, s // 2)),
            ("s2", (c128, s // 4, s // 4)),
            ("s3", (c256, s // 8, s // 8)),
            ("s4", (c256, s // 16, s // 16)),
            ("s5", (c256, b, b)),
            ("normal", (3, s, s)),
            ("albedo", (3, s, s)),
            ("light", (N_SH_RGB,)),
        ]

    def _cbr(self, pair, h, train):
        conv, bn = pair
        return ad.leaky_relu(bn(conv(h), train), self.slope)

    def _decode(self, skips, dec, train):
        lk = lambda t: ad.leaky_relu(t, self.slope)
        k1, k2, k3, k4, k5 = skips
        c0, d1, d1bn, d2, d2bn, d3, d3bn, d4, d4bn, d5, d5bn, out = dec
        h = self._cbr(c0, k5, train)
        h = lk(d1bn(d1(ad.concat_channels(h, k5)), train))
        h = lk(d2bn(d2(ad.concat_channels(h, k4)), train))
        h = lk(d3bn(d3(ad.concat_channels(h, k3)), train))
        h = lk(d4bn(d4(ad.concat_channels(h, k2)), train))
        h = lk(d5bn(d5(ad.concat_channels(h, k1)), train))
        return out(h)

    def forward(self, x, train: bool = False) -> DecompositionOutput:
        h = self._cbr(self.p1, x, train)
        h = self._cbr(self.p2, h, train)
        k1 = self._trace("s1", self._cbr(self.s1, h, train))
        h = self._cbr(self.p3, k1, train)
        k2 = self._trace("s2", self._cbr(self.s2, h, train))
        h = self._cbr(self.p4, k2, train)
        k3 = self._trace("s3", self._cbr(self.s3, h, train))
        h = self._cbr(self.p5, k3, train)
        k4 = self._trace("s4", self._cbr(self.s4, h, train))
        h = self._cbr(self.p6, k4, train)
        k5 = self._trace("s5", self._cbr(self.s5, h, train))

        skips = (k1, k2, k3, k4, k5)
        normal = self._trace("normal", self._decode(skips, self.normal_dec, train))
        albedo = self._trace("albedo", self._decode(skips, self.albedo_dec, train))
        light = self._trace("light", self.light_fc(ad.global_avg_pool(k5)))
        return DecompositionOutput(normal=normal, albedo=albedo, light=light)


# ---------------------------------------------------------------------------
# Builders and checkpoint round trip


def build_sfsnet(cfg: NetConfig, seed: int = 0) -> SfSNet:
    return SfSNet(cfg, seed)


def build_skipnet(cfg: NetConfig, seed: int = 0) -> SkipNet:
    return SkipNet(cfg, seed)


def build_skipnet_plus(cfg: NetConfig, seed: int = 0) -> SkipNetPlus:
    return SkipNetPlus(cfg, seed)


_BUILDERS = {
    "sfsnet": build_sfsnet,
    "skipnet": build_skipnet,
    "skipnet+": build_skipnet_plus,
}


def build_model(arch: str, cfg: NetConfig, seed: int = 0) -> Model:
    if arch not in _BUILDERS:
        raise ValueError(f"unknown architecture {arch!r}; choose from {ARCH_NAMES}")
    return _BUILDERS[arch](cfg, seed)


def save_model(path, model: Model, extra_entries: dict | None = None) -> None:
    """Write parameters + batch-norm state (+ optional optimizer entries),
    with a JSON sidecar naming the architecture and config so the file is
    self-describing."""
    import json
    from pathlib import Path

    entries = model.state_dict()
    if extra_entries:
        entries.update(extra_entries)
    save_checkpoint(path, entries)
    sidecar = {"arch": model.arch, "config": model.cfg.to_dict()}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_model(path) -> tuple[Model, dict[str, np.ndarray]]:
    """Rebuild a model from checkpoint + sidecar.

    Returns (model, leftover entries) where leftovers are anything beyond
    the model state (e.g. optimizer moments), untouched.
    """
    import json
    from pathlib import Path

    sidecar = json.loads(Path(str(path) + ".json").read_text())
    cfg = NetConfig.from_dict(sidecar["config"])
    model = build_model(sidecar["arch"], cfg)
    entries = load_checkpoint(path)
    model.load_state_dict(entries)
    own = set(model.state_dict())
    leftovers = {k: v for k, v in entries.items() if k not in own}
    return model, leftovers


# ---------------------------------------------------------------------------
# Inference wrapper


def decompose(model: Model, images: np.ndarray, masks: np.ndarray):
    """Eval-mode decomposition of an image batch into scene components.

    images is (B, 3, H, W) float32, masks (B, H, W) bool. Returns a list of
    Decomposition records: normals renormalized to unit length, albedo
    clamped to [0, 1] for export, lighting packaged per item.
    """
    from .shcore import normalize_normals
    from .types import ColorMap, Decomposition, LightSH, Mask, VectorFieldMap

    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValueError(f"expected images (B, 3, H, W), got {images.shape}")
    masks = np.asarray(masks, dtype=bool)
    out = model.forward(Tensor(images), train=False)
    results = []
    for i in range(images.shape[0]):
        mask = Mask(masks[i])
        raw_n = VectorFieldMap(out.normal.data[i].transpose(1, 2, 0), role="generic")
        normal = normalize_normals(raw_n, mask)
        albedo = ColorMap(np.clip(out.albedo.data[i].transpose(1, 2, 0), 0.0, 1.0), role="albedo")
        light = LightSH(out.light.data[i].astype(np.float32))
        results.append(Decomposition(normal=normal, albedo=albedo, light=light, mask=mask))
    return results
