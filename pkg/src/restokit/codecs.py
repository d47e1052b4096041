"""Subprocess adapters for the external HEVC/VVC reference encoders.

The adapters convert RGB to planar YUV420 (BT.601 full range), run the
configured encoder binary over a process boundary with a pinned command-line
template, and read back the all-intra reconstruction. Only pixels are kept;
the bitstream is discarded.

Configuration: ``hevc.encoder_path`` / ``vvc.encoder_path`` (overridable via
the ``HEVC_ENCODER_PATH`` / ``VVC_ENCODER_PATH`` environment variables), and
optional ``<kind>.encoder_args`` to re-pin the argument template. When no
real reference binary is configured, callers may opt into the bundled
stand-in codec (still a separate process) via :func:`stub_codec_command`.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config
from .domain import DistortionKind, DomainError

VALID_QP = (32, 37, 42)


class CodecError(DomainError):
    """Adapter invocation failed (bad exit, malformed output)."""


class CapabilityError(CodecError):
    """The external encoder binary is not configured or not present."""


def stub_codec_command() -> str:
    """Command prefix for the bundled stand-in codec (see assets/stub_codec.py)."""
    script = Path(__file__).parent / "assets" / "stub_codec.py"
    return f"{shlex.quote(sys.executable)} -S {shlex.quote(str(script))}"


def rgb_to_yuv420(pixels: np.ndarray) -> tuple[bytes, int, int]:
    """Planar 8-bit YUV420 bytes (full-range BT.601); pads odd sides by edge
    replication so chroma planes subsample cleanly."""
    h, w = pixels.shape[:2]
    if h % 2 or w % 2:
        pixels = np.pad(pixels, ((0, h % 2), (0, w % 2), (0, 0)), mode="edge")
    ph, pw = pixels.shape[:2]
    p = pixels.astype(np.float64)
    r, g, b = p[..., 0], p[..., 1], p[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    u = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    v = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    u2 = u.reshape(ph // 2, 2, pw // 2, 2).mean(axis=(1, 3))
    v2 = v.reshape(ph // 2, 2, pw // 2, 2).mean(axis=(1, 3))
    enc = b"".join(
        np.clip(np.rint(plane), 0, 255).astype(np.uint8).tobytes() for plane in (y, u2, v2)
    )
    return enc, pw, ph


def yuv420_to_rgb(data: bytes, width: int, height: int, out_w: int, out_h: int) -> np.ndarray:
    """Inverse of :func:`rgb_to_yuv420`; crops padding back to (out_h, out_w)."""
    ysize = width * height
    csize = (width // 2) * (height // 2)
    y = np.frombuffer(data, dtype=np.uint8, count=ysize).reshape(height, width).astype(np.float64)
    u = np.frombuffer(data, dtype=np.uint8, count=csize, offset=ysize).reshape(height // 2, width // 2)
    v = np.frombuffer(data, dtype=np.uint8, count=csize, offset=ysize + csize).reshape(height // 2, width // 2)
    u = np.repeat(np.repeat(u, 2, axis=0), 2, axis=1).astype(np.float64) - 128.0
    v = np.repeat(np.repeat(v, 2, axis=0), 2, axis=1).astype(np.float64) - 128.0
    r = y + 1.402 * v
    g = y - 0.344136 * u - 0.714136 * v
    b = y + 1.772 * u
    rgb = np.stack([r, g, b], axis=-1)
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    return rgb[:out_h, :out_w]


DEFAULT_ARGS = "-i {input} -b {bitstream} -o {recon} -wdt {width} -hgt {height} -q {qp} -f {frames} -fr 30"


@dataclass(frozen=True)
class CodecAdapter:
    kind: DistortionKind
    encoder_cmd: str
    args_template: str = DEFAULT_ARGS
    workdir: str | None = None

    def roundtrip(self, pixels: np.ndarray, qp: int) -> np.ndarray:
        return self.roundtrip_batch([pixels], qp)[0]

    def roundtrip_batch(self, frames: list[np.ndarray], qp: int) -> list[np.ndarray]:
        """All-intra round trip of same-sized frames in one encoder run.

        Intra coding at a fixed qp treats frames independently, so batched
        and single-frame invocations reconstruct identically."""
        if qp not in VALID_QP:
            raise DomainError(f"{self.kind.value} qp must be one of {VALID_QP}, got {qp}")
        if not frames:
            return []
        shape = frames[0].shape
        if any(f.shape != shape for f in frames):
            raise DomainError("batched codec frames must share one size")
        encoded = [rgb_to_yuv420(f) for f in frames]
        yuv = b"".join(e[0] for e in encoded)
        pw, ph = encoded[0][1], encoded[0][2]
        with tempfile.TemporaryDirectory(prefix=f"{self.kind.value}-", dir=self.workdir) as tmp:
            src = os.path.join(tmp, "input.yuv")
            bitstream = os.path.join(tmp, "out.bin")
            recon = os.path.join(tmp, "recon.yuv")
            with open(src, "wb") as fh:
                fh.write(yuv)
            cmd = shlex.split(self.encoder_cmd) + shlex.split(
                self.args_template.format(
                    input=src, bitstream=bitstream, recon=recon, width=pw, height=ph, qp=qp, frames=len(frames)
                )
            )
            try:
                proc = subprocess.run(cmd, capture_output=True, timeout=600)
            except FileNotFoundError:
                raise CapabilityError(
                    f"{self.kind.value} encoder binary not found: {cmd[0]!r}"
                ) from None
            if proc.returncode != 0:
                raise CodecError(
                    f"{self.kind.value} encoder exited {proc.returncode}: {proc.stderr.decode(errors='replace')[:500]}"
                )
            frame_len = pw * ph + 2 * ((pw // 2) * (ph // 2))
            try:
                with open(recon, "rb") as fh:
                    data = fh.read()
            except FileNotFoundError:
                raise CodecError(f"{self.kind.value} encoder produced no reconstruction") from None
            if len(data) < frame_len * len(frames):
                raise CodecError(
                    f"{self.kind.value} reconstruction size mismatch: got {len(data)}, want {frame_len * len(frames)}"
                )
        return [
            yuv420_to_rgb(data[i * frame_len : (i + 1) * frame_len], pw, ph, shape[1], shape[0])
            for i in range(len(frames))
        ]


class CodecProvider:
    """Resolves codec kinds to adapters; absent adapters raise CapabilityError."""

    def __init__(self, adapters: dict[DistortionKind, CodecAdapter] | None = None):
        self._adapters = dict(adapters or {})

    def available(self, kind: DistortionKind) -> bool:
        return kind in self._adapters

    def adapter(self, kind: DistortionKind) -> CodecAdapter:
        try:
            return self._adapters[kind]
        except KeyError:
            env_key = f"{kind.value.upper()}_ENCODER_PATH"
            raise CapabilityError(
                f"no {kind.value} encoder configured: set config key "
                f"'{kind.value}.encoder_path' or env {env_key}"
            ) from None

    def roundtrip(self, kind: DistortionKind, pixels: np.ndarray, qp: int) -> np.ndarray:
        return self.adapter(kind).roundtrip(pixels, qp)

    def roundtrip_batch(self, kind: DistortionKind, frames: list[np.ndarray], qp: int) -> list[np.ndarray]:
        return self.adapter(kind).roundtrip_batch(frames, qp)


def provider_from_config(cfg: Config | None = None, use_stub_fallback: bool = False) -> CodecProvider:
    """Build a provider from config/env; optionally fall back to the bundled
    stand-in codec for kinds with no configured binary (desk-scale default
    for the dataset and experiment harnesses)."""
    cfg = cfg or Config()
    adapters: dict[DistortionKind, CodecAdapter] = {}
    workdir = cfg.get("codecs.workdir")
    for kind in (DistortionKind.HEVC, DistortionKind.VVC):
        path = cfg.get(f"{kind.value}.encoder_path")
        if not path and use_stub_fallback:
            path = stub_codec_command()
        if path:
            adapters[kind] = CodecAdapter(
                kind=kind,
                encoder_cmd=str(path),
                args_template=str(cfg.get(f"{kind.value}.encoder_args", DEFAULT_ARGS)),
                workdir=workdir,
            )
    return CodecProvider(adapters)


def stub_provider() -> CodecProvider:
    """Provider backed entirely by the bundled stand-in codec."""
    return provider_from_config(Config(env={}), use_stub_fallback=True)


_default_provider: CodecProvider | None = None


def get_provider() -> CodecProvider:
    global _default_provider
    if _default_provider is None:
        _default_provider = provider_from_config()
    return _default_provider


def set_provider(provider: CodecProvider | None) -> None:
    global _default_provider
    _default_provider = provider
