"""Built-in weight-free reference encoders.

All three encoders map into one fixed 32-dimensional space whose
coordinates have assigned meanings (color, brightness, stripe
orientation, texture, audio bands). Images get their statistics
measured from pixels, captions get the same coordinates from a keyword
lexicon, audio clips from band energies, so a matched image/caption
pair is aligned by construction. These let the export pipeline and its
consumers be exercised end to end with no pretrained weights; they are
not a substitute for a real encoder on natural data.
"""
from __future__ import annotations

import hashlib
import math
import re
import wave

import numpy as np

from .errors import UnreadableInput

DIM = 32

# coordinate map
_COLOR_DIMS = {
    "black": 0, "white": 1, "red": 2, "green": 3, "blue": 4,
    "yellow": 5, "cyan": 6, "magenta": 7, "orange": 8, "purple": 9,
    "gray": 10,
}
DIM_BRIGHT = 11
DIM_DARK = 12
DIM_SATURATION = 13
DIM_VERTICAL = 14    # structure varying along x: vertical stripes
DIM_HORIZONTAL = 15  # structure varying along y: horizontal stripes
DIM_SMOOTH = 16
DIM_NOISY = 17
DIM_AUDIO_LOW = 18
DIM_AUDIO_MID = 19
DIM_AUDIO_HIGH = 20
DIM_AUDIO_FLAT = 21
DIM_LOUD = 22
_HASH_DIMS = list(range(23, 32))

_COLOR_PROTOTYPES = {
    "black": (0, 0, 0), "white": (255, 255, 255), "red": (255, 0, 0),
    "green": (0, 255, 0), "blue": (0, 0, 255), "yellow": (255, 255, 0),
    "cyan": (0, 255, 255), "magenta": (255, 0, 255),
    "orange": (255, 128, 0), "purple": (128, 0, 255),
    "gray": (128, 128, 128),
}

_TEXT_LEXICON = {
    **{word: dim for word, dim in _COLOR_DIMS.items()},
    "grey": _COLOR_DIMS["gray"],
    "bright": DIM_BRIGHT, "light": DIM_BRIGHT,
    "dark": DIM_DARK, "dim": DIM_DARK,
    "colorful": DIM_SATURATION, "vivid": DIM_SATURATION,
    "vertical": DIM_VERTICAL, "horizontal": DIM_HORIZONTAL,
    "smooth": DIM_SMOOTH, "plain": DIM_SMOOTH, "solid": DIM_SMOOTH,
    "noisy": DIM_NOISY, "grainy": DIM_NOISY, "speckled": DIM_NOISY,
    "static": DIM_AUDIO_FLAT, "hiss": DIM_AUDIO_FLAT,
    "low": DIM_AUDIO_LOW, "hum": DIM_AUDIO_LOW, "bass": DIM_AUDIO_LOW,
    "mid": DIM_AUDIO_MID, "tone": DIM_AUDIO_MID,
    "high": DIM_AUDIO_HIGH, "whistle": DIM_AUDIO_HIGH,
    "chirp": DIM_AUDIO_HIGH,
    "loud": DIM_LOUD,
}


def encode_image(image) -> np.ndarray:
    """Pixel statistics of a PIL image in the shared space."""
    rgb = np.asarray(image.convert("RGB").resize((32, 32)), dtype=np.float64)
    vec = np.zeros(DIM)

    flat = rgb.reshape(-1, 3)
    protos = np.array([_COLOR_PROTOTYPES[c] for c in _COLOR_DIMS], dtype=np.float64)
    d2 = ((flat[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
    weights = np.exp(-d2 / (2 * 60.0**2))
    weights /= weights.sum(axis=1, keepdims=True)
    color_hist = weights.mean(axis=0)
    for i, name in enumerate(_COLOR_DIMS):
        vec[_COLOR_DIMS[name]] = color_hist[i]

    luma = (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255.0
    vec[DIM_BRIGHT] = float(luma.mean())
    vec[DIM_DARK] = float(1.0 - luma.mean())
    vec[DIM_SATURATION] = float((rgb.max(axis=2) - rgb.min(axis=2)).mean() / 255.0)

    gx = np.abs(np.diff(luma, axis=1)).mean()
    gy = np.abs(np.diff(luma, axis=0)).mean()
    total = gx + gy + 1e-9
    vec[DIM_VERTICAL] = float(gx / total) * min(1.0, 20.0 * (gx + gy))
    vec[DIM_HORIZONTAL] = float(gy / total) * min(1.0, 20.0 * (gx + gy))

    local_var = float(luma.var())
    vec[DIM_NOISY] = min(1.0, 8.0 * local_var)
    vec[DIM_SMOOTH] = 1.0 - vec[DIM_NOISY]
    return vec.astype(np.float32)


_TOKEN_RE = re.compile(r"[a-z]+")


def encode_text(text: str) -> np.ndarray:
    """Keyword lexicon plus a hashed residual for out-of-lexicon words."""
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        raise UnreadableInput(f"caption {text!r} has no words")
    vec = np.zeros(DIM)
    for tok in tokens:
        dim = _TEXT_LEXICON.get(tok)
        if dim is not None:
            vec[dim] += 1.0
        else:
            digest = hashlib.sha256(tok.encode()).digest()
            vec[_HASH_DIMS[digest[0] % len(_HASH_DIMS)]] += 0.05
    return vec.astype(np.float32)


def encode_audio(path) -> np.ndarray:
    """Band-energy statistics of a PCM WAV file."""
    try:
        with wave.open(str(path), "rb") as fh:
            rate = fh.getframerate()
            n = fh.getnframes()
            width = fh.getsampwidth()
            channels = fh.getnchannels()
            raw = fh.readframes(n)
    except (OSError, wave.Error) as exc:
        raise UnreadableInput(f"cannot read WAV {path}: {exc}") from exc
    if width != 2:
        raise UnreadableInput(f"{path}: only 16-bit PCM supported")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    if samples.size == 0 or not np.any(samples):
        raise UnreadableInput(f"{path}: empty or silent clip")

    spectrum = np.abs(np.fft.rfft(samples))
    freqs = np.fft.rfftfreq(samples.size, d=1.0 / rate)
    power = spectrum**2
    total = float(power.sum())
    if total <= 0.0:
        raise UnreadableInput(f"{path}: no spectral energy")
    vec = np.zeros(DIM)
    vec[DIM_AUDIO_LOW] = float(power[freqs < 300].sum() / total)
    vec[DIM_AUDIO_MID] = float(power[(freqs >= 300) & (freqs < 2000)].sum() / total)
    vec[DIM_AUDIO_HIGH] = float(power[freqs >= 2000].sum() / total)
    nz = spectrum[spectrum > 0]
    flatness = math.exp(float(np.log(nz).mean())) / float(nz.mean()) if nz.size else 0.0
    vec[DIM_AUDIO_FLAT] = flatness
    vec[DIM_LOUD] = min(1.0, float(np.sqrt((samples**2).mean())) * 4.0)
    return vec.astype(np.float32)
