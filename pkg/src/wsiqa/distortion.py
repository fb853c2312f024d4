"""The 25 degradation procedures, five severity levels each."""
import dataclasses
import enum
import logging
import math

import numpy as np
from PIL import Image
from scipy import ndimage
from skimage.filters import threshold_multiotsu

from wsiqa import imgcore, prop, validators
from wsiqa.config import ConfigError, parse_input, read_json, write_json
from wsiqa.imgcore import Border, Codec, ColorSpace, ImageBuffer, Resampling
from wsiqa.schema import ParamTableFields

LOGGER = logging.getLogger(__name__)

LEVELS = (1, 2, 3, 4, 5)
PATCH_SIZE = 16
PATCH_DISPLACEMENT = 16
COLOR_BLOCK_SIZE = 32
UNSHARP_SIGMA = 1.0
OTSU_BINS = 64


class DistortionError(prop.ValidationError):
    pass


class UnsupportedDistortionError(DistortionError):
    pass


class DistortionKind(enum.IntEnum):
    GAUSSIAN_BLUR = 1
    LENS_BLUR = 2
    MOTION_BLUR = 3
    COLOR_DIFFUSION = 4
    COLOR_SHIFT = 5
    COLOR_QUANTIZATION = 6
    COLOR_SATURATION_HSV = 7
    COLOR_SATURATION_LAB = 8
    JPEG2000 = 9
    JPEG = 10
    WHITE_NOISE = 11
    WHITE_NOISE_YCBCR = 12
    IMPULSE_NOISE = 13
    MULTIPLICATIVE_NOISE = 14
    DENOISE = 15
    BRIGHTEN = 16
    DARKEN = 17
    MEAN_SHIFT = 18
    JITTER = 19
    NON_ECCENTRICITY_PATCH = 20
    PIXELATE = 21
    QUANTIZATION = 22
    COLOR_BLOCK = 23
    HIGH_SHARPEN = 24
    CONTRAST_CHANGE = 25

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value

        if isinstance(value, str) and not value.strip().isdigit():
            try:
                return cls[value.strip().upper()]
            except KeyError as error:
                raise DistortionError(f"Unknown distortion kind {value!r}") from error

        try:
            return cls(int(value))
        except (TypeError, ValueError) as error:
            raise DistortionError(f"Unknown distortion kind {value!r}") from error


# families whose fidelity (PSNR) falls as the level rises
FIDELITY_KINDS = (
    DistortionKind.GAUSSIAN_BLUR,
    DistortionKind.LENS_BLUR,
    DistortionKind.MOTION_BLUR,
    DistortionKind.JPEG2000,
    DistortionKind.JPEG,
    DistortionKind.WHITE_NOISE,
    DistortionKind.WHITE_NOISE_YCBCR,
    DistortionKind.IMPULSE_NOISE,
    DistortionKind.MULTIPLICATIVE_NOISE,
    DistortionKind.JITTER,
    DistortionKind.PIXELATE,
)

VARIANTS = {
    DistortionKind.DENOISE: "median3x3",
}

DEFAULT_LEVELS = {
    DistortionKind.GAUSSIAN_BLUR: (1, 2, 4, 6, 8),
    DistortionKind.LENS_BLUR: (1, 2, 4, 6, 8),
    DistortionKind.MOTION_BLUR: (1, 2, 4, 6, 10),
    DistortionKind.COLOR_DIFFUSION: (1, 3, 6, 8, 12),
    DistortionKind.COLOR_SHIFT: (1, 3, 6, 8, 12),
    DistortionKind.COLOR_QUANTIZATION: (64, 32, 16, 8, 4),
    DistortionKind.COLOR_SATURATION_HSV: (0.4, 0.2, 0.1, 0.05, 0.0),
    DistortionKind.COLOR_SATURATION_LAB: (1.5, 2, 3, 4.5, 6),
    DistortionKind.JPEG2000: (20, 50, 100, 200, 400),
    DistortionKind.JPEG: (43, 12, 7, 4, 1),
    DistortionKind.WHITE_NOISE: (0.02, 0.06, 0.10, 0.15, 0.23),
    DistortionKind.WHITE_NOISE_YCBCR: (0.02, 0.04, 0.07, 0.10, 0.15),
    DistortionKind.IMPULSE_NOISE: (0.01, 0.03, 0.07, 0.12, 0.20),
    DistortionKind.MULTIPLICATIVE_NOISE: (0.01, 0.03, 0.07, 0.15, 0.3),
    DistortionKind.DENOISE: (0.05, 0.08, 0.12, 0.18, 0.25),
    DistortionKind.BRIGHTEN: (0.05, 0.1, 0.15, 0.22, 0.3),
    DistortionKind.DARKEN: (0.05, 0.1, 0.15, 0.22, 0.3),
    DistortionKind.MEAN_SHIFT: (0.05, 0.1, 0.15, 0.2, 0.25),
    DistortionKind.JITTER: (0.5, 1, 2, 3, 4),
    DistortionKind.NON_ECCENTRICITY_PATCH: (10, 20, 40, 70, 100),
    DistortionKind.PIXELATE: (2, 4, 8, 16, 32),
    DistortionKind.QUANTIZATION: (5, 4, 3, 2, 1),
    DistortionKind.COLOR_BLOCK: (2, 4, 8, 12, 16),
    DistortionKind.HIGH_SHARPEN: (1, 2, 3, 5, 7),
    DistortionKind.CONTRAST_CHANGE: (3, 5, 7, 9, 12),
}


@dataclasses.dataclass(frozen=True)
class DistortionSpec:
    kind: DistortionKind
    level: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "kind", DistortionKind.parse(self.kind))

        if isinstance(self.level, bool) or int(self.level) != self.level or self.level not in LEVELS:
            raise DistortionError(f"Level must be an integer in 1..5, got {self.level!r}")

        if not 0 <= int(self.seed) < 2 ** 64:
            raise DistortionError(f"Seed must be an unsigned 64-bit integer, got {self.seed!r}")

        object.__setattr__(self, "level", int(self.level))
        object.__setattr__(self, "seed", int(self.seed))


@dataclasses.dataclass(frozen=True)
class DistortionParamTable:
    levels: dict = dataclasses.field(default_factory=lambda: dict(DEFAULT_LEVELS))
    excluded: frozenset = frozenset()

    def parameter(self, kind, level):
        return self.levels[DistortionKind.parse(kind)][level - 1]

    def enabled_kinds(self):
        return [kind for kind in DistortionKind if kind not in self.excluded]

    @classmethod
    def from_body(cls, body):
        try:
            parsed = parse_input(body, ParamTableFields().all())
        except ConfigError as error:
            raise DistortionError(error.message) from error

        ladder = prop.Array(
            prop.Number(),
            validators=[validators.ExactLength(len(LEVELS)), validators.MonotoneLadder()],
        )

        levels = dict(DEFAULT_LEVELS)
        for name, values in (parsed["levels"] or {}).items():
            kind = DistortionKind.parse(name)
            try:
                values = ladder.parse_input_and_validate(kind.name, {kind.name: values})
            except prop.ValidationError as error:
                raise DistortionError(error.message) from error
            levels[kind] = tuple(values)

        excluded = frozenset(DistortionKind.parse(name) for name in parsed["excluded"] or [])
        return cls(levels=levels, excluded=excluded)

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()

        return cls.from_body(read_json(path))

    def to_body(self):
        return {
            "levels": {kind.name: list(values) for kind, values in sorted(self.levels.items())},
            "excluded": sorted(kind.name for kind in self.excluded),
        }

    def dump(self, path):
        write_json(path, self.to_body())


def _gaussian_blur(img, sigma, rng):  # pylint: disable=unused-argument
    return imgcore.convolve(img, imgcore.gaussian_kernel(sigma), Border.REPLICATE)


def _lens_blur(img, radius, rng):  # pylint: disable=unused-argument
    return imgcore.convolve(img, imgcore.disk_kernel(radius), Border.REPLICATE)


def _motion_blur(img, length, rng):
    angle = rng.uniform(0.0, math.pi)
    return imgcore.convolve(img, imgcore.line_kernel(length, angle), Border.REPLICATE)


def _color_diffusion(img, sigma, rng):  # pylint: disable=unused-argument
    lab = imgcore.color_convert(img, ColorSpace.LAB)
    kernel = imgcore.gaussian_kernel(sigma)
    samples = lab.samples.copy()
    for channel in (1, 2):
        samples[:, :, channel] = imgcore.filter_plane(samples[:, :, channel], kernel, Border.REPLICATE)
    return imgcore.color_convert_back(ImageBuffer(samples), ColorSpace.LAB)


def _color_shift(img, pixels, rng):
    angle = rng.uniform(0.0, 2.0 * math.pi)
    offset = (round(pixels * math.sin(angle)), round(pixels * math.cos(angle)))

    green = img.plane(1)
    shifted = ndimage.shift(green, offset, order=0, mode="nearest")

    gray = imgcore.luma(img).plane(0)
    magnitude = np.hypot(ndimage.sobel(gray, axis=0, mode="nearest"), ndimage.sobel(gray, axis=1, mode="nearest"))
    peak = magnitude.max()
    mask = magnitude / peak if peak > 0 else np.zeros_like(magnitude)

    samples = img.samples.copy()
    samples[:, :, 1] = mask * shifted + (1.0 - mask) * green
    return ImageBuffer(samples)


def _color_quantization(img, colors, rng):  # pylint: disable=unused-argument
    source = Image.fromarray(img.to_uint8(), mode="RGB")
    palette = source.quantize(colors=int(colors), method=Image.Quantize.MEDIANCUT)
    dithered = source.quantize(palette=palette, dither=Image.Dither.FLOYDSTEINBERG)
    return ImageBuffer.from_uint8(np.asarray(dithered.convert("RGB")))


def _saturation_hsv(img, factor, rng):  # pylint: disable=unused-argument
    samples = imgcore.color_convert(img, ColorSpace.HSV).samples.copy()
    samples[:, :, 1] = np.clip(samples[:, :, 1] * factor, 0.0, 1.0)
    return imgcore.color_convert_back(ImageBuffer(samples), ColorSpace.HSV)


def _saturation_lab(img, factor, rng):  # pylint: disable=unused-argument
    samples = imgcore.color_convert(img, ColorSpace.LAB).samples.copy()
    samples[:, :, 1:] *= factor
    return imgcore.color_convert_back(ImageBuffer(samples), ColorSpace.LAB)


def _jpeg2000(img, ratio, rng):  # pylint: disable=unused-argument
    if not imgcore.codec_available(Codec.JPEG2000):
        raise UnsupportedDistortionError(
            "JPEG2000 needs Pillow built with OpenJPEG; exclude JPEG2000 in the parameter table to skip it"
        )
    return imgcore.encode_decode(img, Codec.JPEG2000, ratio)


def _jpeg(img, quality, rng):  # pylint: disable=unused-argument
    return imgcore.encode_decode(img, Codec.JPEG, quality)


def _white_noise(img, sigma, rng):
    return ImageBuffer(np.clip(img.samples + rng.normal(0.0, sigma, img.shape), 0.0, 1.0))


def _white_noise_ycbcr(img, sigma, rng):
    ycbcr = imgcore.color_convert(img, ColorSpace.YCBCR)
    noisy = ImageBuffer(ycbcr.samples + rng.normal(0.0, sigma, img.shape))
    return imgcore.color_convert_back(noisy, ColorSpace.YCBCR)


def _impulse_noise(img, density, rng):
    hit = rng.random(img.shape) < density
    salt = rng.random(img.shape) < 0.5
    return ImageBuffer(np.where(hit, salt.astype(np.float64), img.samples))


def _multiplicative_noise(img, variance, rng):
    noise = rng.normal(0.0, math.sqrt(variance), img.shape)
    return ImageBuffer(np.clip(img.samples + img.samples * noise, 0.0, 1.0))


def _denoise(img, sigma, rng):
    noisy = np.clip(img.samples + rng.normal(0.0, sigma, img.shape), 0.0, 1.0)
    return ImageBuffer(ndimage.median_filter(noisy, size=(3, 3, 1), mode="nearest"))


def _luminance_curve(img, amplitude):
    # 0 and 1 are fixed points of v + a*sin(pi*v)
    values = img.samples
    return ImageBuffer(np.clip(values + amplitude * np.sin(math.pi * values), 0.0, 1.0))


def _brighten(img, amplitude, rng):  # pylint: disable=unused-argument
    return _luminance_curve(img, amplitude)


def _darken(img, amplitude, rng):  # pylint: disable=unused-argument
    return _luminance_curve(img, -amplitude)


def _mean_shift(img, shift, rng):  # pylint: disable=unused-argument
    return ImageBuffer(np.clip(img.samples + shift, 0.0, 1.0))


def _jitter(img, amplitude, rng):
    rows, cols = np.mgrid[0:img.height, 0:img.width].astype(np.float64)
    rows += rng.uniform(-amplitude, amplitude, rows.shape)
    cols += rng.uniform(-amplitude, amplitude, cols.shape)

    planes = [
        ndimage.map_coordinates(img.plane(c), [rows, cols], order=3, mode="nearest")
        for c in range(img.channels)
    ]
    return ImageBuffer(np.clip(np.stack(planes, axis=2), 0.0, 1.0))


def _non_eccentricity_patch(img, count, rng):
    size_y = min(PATCH_SIZE, img.height)
    size_x = min(PATCH_SIZE, img.width)
    samples = img.samples.copy()

    for _ in range(int(count)):
        top = rng.integers(0, img.height - size_y + 1)
        left = rng.integers(0, img.width - size_x + 1)
        dy, dx = rng.integers(-PATCH_DISPLACEMENT, PATCH_DISPLACEMENT + 1, size=2)
        new_top = int(np.clip(top + dy, 0, img.height - size_y))
        new_left = int(np.clip(left + dx, 0, img.width - size_x))
        samples[new_top:new_top + size_y, new_left:new_left + size_x] = \
            img.samples[top:top + size_y, left:left + size_x]

    return ImageBuffer(samples)


def _pixelate(img, block, rng):  # pylint: disable=unused-argument
    small_w = max(1, int(round(img.width / block)))
    small_h = max(1, int(round(img.height / block)))
    small = imgcore.resample(img, small_w, small_h, Resampling.NEAREST)
    return imgcore.resample(small, img.width, img.height, Resampling.NEAREST)


def _quantization(img, thresholds, rng):  # pylint: disable=unused-argument
    classes = int(thresholds) + 1
    samples = img.samples.copy()

    for c in range(img.channels):
        plane = samples[:, :, c]

        if np.unique(plane).size < classes:
            LOGGER.warning("Channel %d has fewer than %d distinct values; quantization leaves it unchanged", c, classes)
            continue

        try:
            cuts = threshold_multiotsu(plane, classes=classes, nbins=OTSU_BINS)
        except ValueError as error:
            LOGGER.warning("Otsu thresholds failed on channel %d (%s); channel left unchanged", c, error)
            continue

        labels = np.digitize(plane, cuts)
        quantized = plane.copy()
        for label in np.unique(labels):
            quantized[labels == label] = plane[labels == label].mean()
        samples[:, :, c] = quantized

    return ImageBuffer(samples)


def _color_block(img, count, rng):
    size_y = min(COLOR_BLOCK_SIZE, img.height)
    size_x = min(COLOR_BLOCK_SIZE, img.width)
    samples = img.samples.copy()

    for _ in range(int(count)):
        top = rng.integers(0, img.height - size_y + 1)
        left = rng.integers(0, img.width - size_x + 1)
        samples[top:top + size_y, left:left + size_x] = rng.random(img.channels)

    return ImageBuffer(samples)


def _high_sharpen(img, amount, rng):  # pylint: disable=unused-argument
    blurred = imgcore.convolve(img, imgcore.gaussian_kernel(UNSHARP_SIGMA), Border.REPLICATE)
    return ImageBuffer(np.clip(img.samples + amount * (img.samples - blurred.samples), 0.0, 1.0))


def _contrast_change(img, gain, rng):  # pylint: disable=unused-argument
    """A positive gain steepens the normalized sigmoid; a negative gain applies its inverse and flattens."""
    steepness = abs(gain)
    low = 1.0 / (1.0 + math.exp(steepness * 0.5))
    high = 1.0 / (1.0 + math.exp(-steepness * 0.5))
    values = img.samples

    if gain > 0:
        curve = (1.0 / (1.0 + np.exp(-steepness * (values - 0.5))) - low) / (high - low)
    else:
        squashed = np.clip(low + values * (high - low), 1e-12, 1.0 - 1e-12)
        curve = 0.5 - np.log(1.0 / squashed - 1.0) / steepness

    return ImageBuffer(np.clip(curve, 0.0, 1.0))


def contrast_direction(seed):
    """Even seeds raise contrast (+1), odd seeds lower it (-1)."""
    return 1 if int(seed) % 2 == 0 else -1


_HANDLERS = {
    DistortionKind.GAUSSIAN_BLUR: _gaussian_blur,
    DistortionKind.LENS_BLUR: _lens_blur,
    DistortionKind.MOTION_BLUR: _motion_blur,
    DistortionKind.COLOR_DIFFUSION: _color_diffusion,
    DistortionKind.COLOR_SHIFT: _color_shift,
    DistortionKind.COLOR_QUANTIZATION: _color_quantization,
    DistortionKind.COLOR_SATURATION_HSV: _saturation_hsv,
    DistortionKind.COLOR_SATURATION_LAB: _saturation_lab,
    DistortionKind.JPEG2000: _jpeg2000,
    DistortionKind.JPEG: _jpeg,
    DistortionKind.WHITE_NOISE: _white_noise,
    DistortionKind.WHITE_NOISE_YCBCR: _white_noise_ycbcr,
    DistortionKind.IMPULSE_NOISE: _impulse_noise,
    DistortionKind.MULTIPLICATIVE_NOISE: _multiplicative_noise,
    DistortionKind.DENOISE: _denoise,
    DistortionKind.BRIGHTEN: _brighten,
    DistortionKind.DARKEN: _darken,
    DistortionKind.MEAN_SHIFT: _mean_shift,
    DistortionKind.JITTER: _jitter,
    DistortionKind.NON_ECCENTRICITY_PATCH: _non_eccentricity_patch,
    DistortionKind.PIXELATE: _pixelate,
    DistortionKind.QUANTIZATION: _quantization,
    DistortionKind.COLOR_BLOCK: _color_block,
    DistortionKind.HIGH_SHARPEN: _high_sharpen,
    DistortionKind.CONTRAST_CHANGE: _contrast_change,
}


def apply_distortion(img, spec, table=None):
    if img.channels != 3:
        raise DistortionError(f"Distortions need an RGB image, got {img.channels} channel(s)")

    table = table or DistortionParamTable()

    if spec.kind in table.excluded:
        raise UnsupportedDistortionError(f"{spec.kind.name} is excluded by the parameter table")

    parameter = table.parameter(spec.kind, spec.level)
    if spec.kind is DistortionKind.CONTRAST_CHANGE:
        parameter = contrast_direction(spec.seed) * parameter
    rng = np.random.default_rng(spec.seed)

    LOGGER.debug("Applying %s level %d (parameter %s, seed %d)", spec.kind.name, spec.level, parameter, spec.seed)
    distorted = _HANDLERS[spec.kind](img, parameter, rng)

    if distorted.shape != img.shape:
        raise DistortionError(f"{spec.kind.name} changed the image shape from {img.shape} to {distorted.shape}")

    return distorted.clamped()
