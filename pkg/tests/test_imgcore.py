import numpy as np
import pytest

from wsiqa import imgcore
from wsiqa.imgcore import Border, Codec, ColorSpace, ImageBuffer, ImageError, KernelError, Resampling


def _random_image(height=12, width=10, seed=0):
    return ImageBuffer(np.random.default_rng(seed).random((height, width, 3)))


def test_image_buffer_rejects_bad_shapes():

    with pytest.raises(ImageError) as e:
        ImageBuffer(np.zeros((4, 4, 2)))
    assert e.value.message == "Expected (height, width, 1|3) samples, got shape (4, 4, 2)"

    with pytest.raises(ImageError):
        ImageBuffer(np.zeros((0, 4, 3)))


def test_image_buffer_rejects_non_finite():

    samples = np.zeros((2, 2, 3))
    samples[1, 1, 2] = np.nan

    with pytest.raises(ImageError) as e:
        ImageBuffer(samples)
    assert e.value.message == "Image samples must be finite"


def test_image_buffer_is_read_only():

    img = ImageBuffer.constant(3, 2, 0.5)
    assert (img.width, img.height, img.channels) == (3, 2, 3)

    with pytest.raises(ValueError):
        img.samples[0, 0, 0] = 1.0


def test_image_buffer_uint8_conversions():

    array = np.arange(24, dtype=np.uint8).reshape(2, 4, 3) * 10
    img = ImageBuffer.from_uint8(array)

    assert img.samples[0, 0, 1] == pytest.approx(10 / 255)
    assert np.array_equal(img.to_uint8(), array)
    assert ImageBuffer(np.full((1, 1, 3), 1.7)).to_uint8()[0, 0, 0] == 255


def test_color_convert_white_to_hsv():

    hsv = imgcore.color_convert(ImageBuffer.constant(2, 2, 1.0), ColorSpace.HSV)
    assert np.allclose(hsv.plane(1), 0.0)
    assert np.allclose(hsv.plane(2), 1.0)


def test_color_convert_black_to_ycbcr():

    ycbcr = imgcore.color_convert(ImageBuffer.constant(2, 2, 0.0), ColorSpace.YCBCR)
    assert np.allclose(ycbcr.samples[0, 0], [0.0, 0.5, 0.5], atol=1e-12)


def test_color_convert_luma_of_gray_is_gray():

    luma = imgcore.color_convert(ImageBuffer.constant(3, 3, 0.25), ColorSpace.LUMA)
    assert luma.channels == 1
    assert np.allclose(luma.samples, 0.25, atol=1e-12)
    assert imgcore.color_convert(luma, ColorSpace.LUMA) is luma


@pytest.mark.parametrize("space", [ColorSpace.HSV, ColorSpace.LAB, ColorSpace.YCBCR])
def test_color_round_trip(space):

    img = ImageBuffer(np.random.default_rng(7).random((10, 100, 3)))
    back = imgcore.color_convert_back(imgcore.color_convert(img, space), space)
    assert np.max(np.abs(back.samples - img.samples)) < 1e-4


def test_color_convert_lab_carries_cie_units():

    lab = imgcore.color_convert(ImageBuffer.constant(1, 1, 1.0), ColorSpace.LAB)
    assert lab.samples[0, 0, 0] == pytest.approx(100.0, abs=1e-3)


def test_color_convert_needs_three_channels():

    with pytest.raises(ImageError) as e:
        imgcore.color_convert(ImageBuffer(np.zeros((2, 2))), ColorSpace.HSV)
    assert e.value.message == "HSV conversion needs 3 channels, got 1"


def test_color_convert_back_luma_has_no_inverse():

    with pytest.raises(ImageError) as e:
        imgcore.color_convert_back(ImageBuffer.constant(2, 2, 0.5), ColorSpace.LUMA)
    assert e.value.message == "LUMA has no inverse conversion"


@pytest.mark.parametrize("method", list(Resampling))
def test_resample_constant_stays_constant(method):

    resized = imgcore.resample(ImageBuffer.constant(9, 7, 0.25), 4, 13, method)
    assert resized.shape == (13, 4, 3)
    assert np.allclose(resized.samples, 0.25, atol=1e-6)


def test_resample_nearest_to_single_pixel():

    img = _random_image(height=6, width=4)
    single = imgcore.resample(img, 1, 1, Resampling.NEAREST)
    # floor((0 + 0.5) * size / 1) picks the middle-right sample
    assert np.array_equal(single.samples[0, 0], img.samples[3, 2])


def test_resample_nearest_identity_is_exact():

    img = _random_image()
    assert np.array_equal(imgcore.resample(img, img.width, img.height, Resampling.NEAREST).samples, img.samples)


def test_resample_clamps_overshoot():

    img = ImageBuffer(np.kron(np.eye(4), np.ones((4, 4)))[:, :, np.newaxis].repeat(3, axis=2))
    resized = imgcore.resample(img, 37, 29, Resampling.BICUBIC)
    assert resized.samples.min() >= 0.0
    assert resized.samples.max() <= 1.0


def test_resample_rejects_empty_target():

    with pytest.raises(ImageError):
        imgcore.resample(_random_image(), 0, 3)


def test_resize_and_crop_exact_fit():

    out = imgcore.resize_and_crop(ImageBuffer.constant(1024, 768, 0.5))
    assert (out.width, out.height) == (512, 384)


def test_resize_and_crop_centre_crops_width():

    ramp = np.tile(np.arange(1536, dtype=np.float64) / 1535.0, (768, 1))
    img = ImageBuffer(np.repeat(ramp[:, :, np.newaxis], 3, axis=2))

    out = imgcore.resize_and_crop(img, 512, 384, Resampling.NEAREST)

    assert (out.width, out.height) == (512, 384)
    # the 768-wide intermediate drops 128 columns on the left; column j samples source column 2j + 1
    assert out.samples[0, 0, 0] == pytest.approx(257 / 1535.0)
    assert out.samples[0, -1, 0] == pytest.approx((2 * 639 + 1) / 1535.0)


def test_resize_and_crop_keeps_target_sized_input():

    img = ImageBuffer.constant(512, 384, 0.1)
    assert imgcore.resize_and_crop(img) is img


def test_resize_and_crop_rejects_small_source():

    with pytest.raises(ImageError) as e:
        imgcore.resize_and_crop(ImageBuffer.constant(100, 80, 0.1))
    assert e.value.message == "Source 100x80 is smaller than the target 512x384 in both dimensions"


@pytest.mark.parametrize("kernel", [
    imgcore.gaussian_kernel(0.5),
    imgcore.gaussian_kernel(1.0),
    imgcore.gaussian_kernel(8.0),
    imgcore.disk_kernel(1.0),
    imgcore.disk_kernel(4.5),
    imgcore.line_kernel(3.0, 0.0),
    imgcore.line_kernel(11.0, 0.7),
    imgcore.line_kernel(25.0, 2.2),
])
def test_kernels_have_unit_sum(kernel):

    assert abs(kernel.total - 1.0) < 1e-9


def test_gaussian_kernel_radius():

    kernel = imgcore.gaussian_kernel(1.0)
    assert kernel.weights.shape == (7, 7)
    assert kernel.radius == (3, 3)
    assert kernel.separable is not None


def test_kernel_rejects_even_dimensions():

    with pytest.raises(KernelError) as e:
        imgcore.convolve(_random_image(), np.ones((2, 3)) / 6)
    assert e.value.message == "Kernel dimensions must be odd, got 2x3"


@pytest.mark.parametrize("border", list(Border))
def test_convolve_preserves_constant(border):

    out = imgcore.convolve(ImageBuffer.constant(9, 8, 0.4), imgcore.gaussian_kernel(2.0), border)
    assert np.allclose(out.samples, 0.4, atol=1e-12)


def test_convolve_delta_is_identity():

    img = _random_image()
    delta = np.zeros((3, 3))
    delta[1, 1] = 1.0
    assert np.array_equal(imgcore.convolve(img, delta).samples, img.samples)


def test_convolve_box_matches_brute_force():

    ramp = np.arange(25, dtype=np.float64).reshape(5, 5) / 24.0
    img = ImageBuffer(ramp)
    box = np.ones((3, 3)) / 9.0

    padded = np.pad(ramp, 1, mode="edge")
    expected = np.array([[padded[i:i + 3, j:j + 3].sum() / 9.0 for j in range(5)] for i in range(5)])

    assert np.allclose(imgcore.convolve(img, box, Border.REPLICATE).plane(0), expected, atol=1e-12)


def test_convolve_flips_asymmetric_kernels():

    ramp = np.arange(25, dtype=np.float64).reshape(5, 5) / 24.0
    kernel = np.zeros((3, 3))
    kernel[1, 0] = 1.0

    shifted = imgcore.convolve(ImageBuffer(ramp), kernel, Border.REPLICATE).plane(0)

    assert np.allclose(shifted[:, :4], ramp[:, 1:])
    assert np.allclose(shifted[:, 4], ramp[:, 4])


def test_png_round_trip(tmp_path):

    img = ImageBuffer.from_uint8(np.random.default_rng(3).integers(0, 256, size=(6, 5, 3), dtype=np.uint8))
    imgcore.write_png(img, tmp_path / "nested" / "img.png")

    back = imgcore.read_image(tmp_path / "nested" / "img.png")
    assert np.array_equal(back.to_uint8(), img.to_uint8())


def test_read_image_missing_file(tmp_path):

    with pytest.raises(ImageError) as e:
        imgcore.read_image(tmp_path / "missing.png")
    assert e.value.message.startswith(f"Cannot read image {tmp_path / 'missing.png'}")


@pytest.mark.skipif(not imgcore.codec_available(Codec.JPEG), reason="Pillow built without JPEG")
def test_jpeg_round_trip_stays_close():

    img = ImageBuffer.constant(16, 16, 0.5)
    decoded = imgcore.encode_decode(img, Codec.JPEG, 90)
    assert decoded.shape == img.shape
    assert np.max(np.abs(decoded.samples - img.samples)) < 0.02
