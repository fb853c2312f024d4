"""Image containers, color spaces, resampling and convolution shared by distortions and metrics.

Samples are float64 in (height, width, channels) order. RGB, HSV, YCbCr and luma
buffers are nominally in [0, 1]; Lab buffers carry CIE units (L in [0, 100]).
"""
import dataclasses
import enum
import io
import logging
import math
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image, features as pil_features
from scipy import ndimage
from skimage import color as skcolor

from wsiqa.prop import ValidationError

LOGGER = logging.getLogger(__name__)

BT601_LUMA = np.array([0.299, 0.587, 0.114])

# full-range BT.601 with chroma centred on 0.5
_RGB_TO_YCBCR = np.array([
    [0.299, 0.587, 0.114],
    [-0.299 / 1.772, -0.587 / 1.772, 0.886 / 1.772],
    [0.701 / 1.402, -0.587 / 1.402, -0.114 / 1.402],
])
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])


class ImageError(ValidationError):
    pass


class KernelError(ValidationError):
    pass


class ColorSpace(enum.Enum):
    HSV = "hsv"
    LAB = "lab"
    YCBCR = "ycbcr"
    LUMA = "luma"


class Resampling(enum.Enum):
    BICUBIC = "bicubic"
    NEAREST = "nearest"
    BILINEAR = "bilinear"


class Border(enum.Enum):
    REPLICATE = "nearest"
    REFLECT = "reflect"


class Codec(enum.Enum):
    JPEG = "JPEG"
    JPEG2000 = "JPEG2000"


@dataclasses.dataclass(frozen=True)
class ImageBuffer:
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 2:
            samples = samples[:, :, np.newaxis]

        if samples.ndim != 3 or samples.shape[2] not in (1, 3):
            raise ImageError(f"Expected (height, width, 1|3) samples, got shape {samples.shape}")

        if samples.shape[0] == 0 or samples.shape[1] == 0:
            raise ImageError(f"Image dimensions must be positive, got {samples.shape[1]}x{samples.shape[0]}")

        if not np.all(np.isfinite(samples)):
            raise ImageError("Image samples must be finite")

        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def width(self):
        return self.samples.shape[1]

    @property
    def height(self):
        return self.samples.shape[0]

    @property
    def channels(self):
        return self.samples.shape[2]

    @property
    def shape(self):
        return self.samples.shape

    @classmethod
    def constant(cls, width, height, value, channels=3):
        value = np.broadcast_to(np.asarray(value, dtype=np.float64), (channels,))
        return cls(np.tile(value, (height, width, 1)))

    @classmethod
    def from_uint8(cls, array):
        return cls(np.asarray(array, dtype=np.float64) / 255.0)

    def to_uint8(self):
        return np.round(np.clip(self.samples, 0.0, 1.0) * 255.0).astype(np.uint8)

    def clamped(self):
        return ImageBuffer(np.clip(self.samples, 0.0, 1.0))

    def plane(self, channel):
        return self.samples[:, :, channel]


@dataclasses.dataclass(frozen=True)
class Kernel2D:
    weights: np.ndarray
    # (column vector, row vector) when the kernel is their outer product
    separable: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 2:
            raise KernelError(f"Kernel must be 2-D, got {weights.ndim}-D")

        if weights.shape[0] % 2 == 0 or weights.shape[1] % 2 == 0:
            raise KernelError(f"Kernel dimensions must be odd, got {weights.shape[0]}x{weights.shape[1]}")

        object.__setattr__(self, "weights", weights)

    @property
    def radius(self):
        return self.weights.shape[0] // 2, self.weights.shape[1] // 2

    @property
    def total(self):
        return float(self.weights.sum())


def gaussian_kernel(sigma):
    if sigma <= 0:
        raise KernelError(f"Gaussian sigma must be positive, got {sigma}")

    radius = int(math.ceil(3 * sigma))
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    profile = np.exp(-(taps ** 2) / (2.0 * sigma ** 2))
    profile /= profile.sum()
    return Kernel2D(np.outer(profile, profile), separable=(profile, profile))


def disk_kernel(radius):
    if radius <= 0:
        raise KernelError(f"Disk radius must be positive, got {radius}")

    extent = int(math.ceil(radius))
    y, x = np.mgrid[-extent:extent + 1, -extent:extent + 1]
    weights = (x ** 2 + y ** 2 <= radius ** 2).astype(np.float64)
    return Kernel2D(weights / weights.sum())


def line_kernel(length, angle):
    """Anti-aliased line through the kernel centre; ``angle`` in radians."""
    if length <= 0:
        raise KernelError(f"Line length must be positive, got {length}")

    half = length / 2.0
    extent = int(math.ceil(half)) + 1
    weights = np.zeros((2 * extent + 1, 2 * extent + 1))
    steps = max(2, int(math.ceil(length * 4)) + 1)

    for t in np.linspace(-half, half, steps):
        x = extent + t * math.cos(angle)
        y = extent - t * math.sin(angle)
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        weights[y0, x0] += (1 - fx) * (1 - fy)
        weights[y0, x0 + 1] += fx * (1 - fy)
        weights[y0 + 1, x0] += (1 - fx) * fy
        weights[y0 + 1, x0 + 1] += fx * fy

    return Kernel2D(weights / weights.sum())


def filter_plane(plane, kernel, border=Border.REPLICATE):
    """Correlate one 2-D plane with ``kernel``; output keeps the input size."""
    if kernel.separable is not None:
        column, row = kernel.separable
        out = ndimage.correlate1d(plane, column, axis=0, mode=border.value)
        return ndimage.correlate1d(out, row, axis=1, mode=border.value)

    return ndimage.correlate(plane, kernel.weights, mode=border.value)


def convolve(img, kernel, border=Border.REPLICATE):
    if not isinstance(kernel, Kernel2D):
        kernel = Kernel2D(kernel)

    # flipping makes correlation a true convolution for asymmetric kernels
    flipped = Kernel2D(kernel.weights[::-1, ::-1],
                       separable=None if kernel.separable is None else
                       (kernel.separable[0][::-1], kernel.separable[1][::-1]))

    planes = [filter_plane(img.plane(c), flipped, border) for c in range(img.channels)]
    return ImageBuffer(np.stack(planes, axis=2))


def luma(img):
    if img.channels == 1:
        return img

    return ImageBuffer(img.samples @ BT601_LUMA)


def color_convert(img, target):
    if target is ColorSpace.LUMA:
        return luma(img)

    if img.channels != 3:
        raise ImageError(f"{target.name} conversion needs 3 channels, got {img.channels}")

    rgb = np.clip(img.samples, 0.0, 1.0)

    if target is ColorSpace.HSV:
        return ImageBuffer(skcolor.rgb2hsv(rgb))

    if target is ColorSpace.LAB:
        return ImageBuffer(skcolor.rgb2lab(rgb, illuminant="D65"))

    if target is ColorSpace.YCBCR:
        return ImageBuffer(rgb @ _RGB_TO_YCBCR.T + _CHROMA_OFFSET)

    raise ImageError(f"Unsupported color space {target!r}")


def color_convert_back(img, source):
    if img.channels != 3:
        raise ImageError(f"{source.name} buffers have 3 channels, got {img.channels}")

    if source is ColorSpace.HSV:
        rgb = skcolor.hsv2rgb(np.clip(img.samples, 0.0, 1.0))
    elif source is ColorSpace.LAB:
        rgb = skcolor.lab2rgb(img.samples, illuminant="D65")
    elif source is ColorSpace.YCBCR:
        rgb = (img.samples - _CHROMA_OFFSET) @ _YCBCR_TO_RGB.T
    else:
        raise ImageError(f"{source.name} has no inverse conversion")

    return ImageBuffer(np.clip(rgb, 0.0, 1.0))


def _nearest_indices(source_size, target_size):
    indices = np.floor((np.arange(target_size) + 0.5) * source_size / target_size).astype(int)
    return np.clip(indices, 0, source_size - 1)


def resample(img, new_width, new_height, method=Resampling.BICUBIC):
    if new_width <= 0 or new_height <= 0:
        raise ImageError(f"Target dimensions must be positive, got {new_width}x{new_height}")

    if method is Resampling.NEAREST:
        rows = _nearest_indices(img.height, new_height)
        cols = _nearest_indices(img.width, new_width)
        return ImageBuffer(img.samples[rows][:, cols])

    if (new_width, new_height) == (img.width, img.height):
        return ImageBuffer(img.samples.copy())

    pil_filter = Image.Resampling.BICUBIC if method is Resampling.BICUBIC else Image.Resampling.BILINEAR
    planes = []
    for c in range(img.channels):
        plane = Image.fromarray(img.plane(c).astype(np.float32), mode="F")
        planes.append(np.asarray(plane.resize((new_width, new_height), resample=pil_filter), dtype=np.float64))

    return ImageBuffer(np.clip(np.stack(planes, axis=2), 0.0, 1.0))


def resize_and_crop(img, target_w=512, target_h=384, method=Resampling.BICUBIC):
    if img.width < target_w and img.height < target_h:
        raise ImageError(
            f"Source {img.width}x{img.height} is smaller than the target {target_w}x{target_h} in both dimensions"
        )

    if (img.width, img.height) == (target_w, target_h):
        return img

    scale = max(target_w / img.width, target_h / img.height)
    scaled_w = max(target_w, int(round(img.width * scale)))
    scaled_h = max(target_h, int(round(img.height * scale)))
    scaled = resample(img, scaled_w, scaled_h, method)

    left = (scaled_w - target_w) // 2
    top = (scaled_h - target_h) // 2
    return ImageBuffer(scaled.samples[top:top + target_h, left:left + target_w])


def read_image(path):
    try:
        with Image.open(path) as handle:
            array = np.asarray(handle.convert("RGB"))
    except (OSError, ValueError) as error:
        raise ImageError(f"Cannot read image {path}: {error}") from error

    return ImageBuffer.from_uint8(array)


def write_png(img, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    array = img.to_uint8()
    mode = "L" if img.channels == 1 else "RGB"
    Image.fromarray(array[:, :, 0] if img.channels == 1 else array, mode=mode).save(path, format="PNG")


def codec_available(codec):
    if codec is Codec.JPEG2000:
        return bool(pil_features.check("jpg_2000"))

    return bool(pil_features.check("jpg"))


def encode_decode(img, codec, quality):
    """Round-trip through a lossy codec. JPEG takes a quality factor, JPEG2000 a compression ratio."""
    if not codec_available(codec):
        raise ImageError(f"Pillow was built without a {codec.value} codec")

    buffer = io.BytesIO()
    pil_image = Image.fromarray(img.to_uint8(), mode="RGB")

    if codec is Codec.JPEG:
        pil_image.save(buffer, format="JPEG", quality=int(quality))
    else:
        pil_image.save(buffer, format="JPEG2000", quality_mode="rates", quality_layers=[float(quality)])

    buffer.seek(0)
    with Image.open(buffer) as decoded:
        return ImageBuffer.from_uint8(np.asarray(decoded.convert("RGB")))
