"""
画像拡張

ランダムな位置の切り出しと元解像度へのリサイズ、および水平反転のみを行います。
テスト時は中央切り出しを用います。
"""

from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import zoom

from src.domain.image_sample import AugmentedPair, ImageSample
from src.utils.exceptions import ConfigurationError


def _check_crop_fraction(crop_fraction: float) -> None:
    if not 0.0 < crop_fraction <= 1.0:
        raise ConfigurationError(
            f"切り出し比率は (0, 1] の範囲である必要があります: {crop_fraction}",
            key="dataset.crop_fraction"
        )


def crop_size(image_shape: Tuple[int, int, int], crop_fraction: float) -> Tuple[int, int]:
    """切り出し窓の (高さ, 幅)"""
    _check_crop_fraction(crop_fraction)
    _, height, width = image_shape
    return max(1, int(round(crop_fraction * height))), max(1, int(round(crop_fraction * width)))


def crop_and_resize(pixels: np.ndarray, top: int, left: int, crop_h: int, crop_w: int) -> np.ndarray:
    """
    窓を切り出して元の解像度に双線形補間で戻す

    Args:
        pixels: (C, H, W) 画素配列
        top, left: 窓の左上位置
        crop_h, crop_w: 窓の大きさ

    Returns:
        (C, H, W) 画素配列
    """
    _, height, width = pixels.shape
    window = pixels[:, top:top + crop_h, left:left + crop_w]
    if (crop_h, crop_w) == (height, width):
        return window.copy()
    resized = zoom(window, (1.0, height / crop_h, width / crop_w), order=1, mode='nearest')
    # zoomの出力形状は丸めで1画素ずれることがある
    resized = resized[:, :height, :width]
    if resized.shape != pixels.shape:
        resized = np.pad(
            resized,
            ((0, 0), (0, height - resized.shape[1]), (0, width - resized.shape[2])),
            mode='edge'
        )
    return np.clip(resized, 0.0, 1.0)


def horizontal_flip(pixels: np.ndarray) -> np.ndarray:
    """水平反転"""
    return pixels[:, :, ::-1].copy()


def augment(sample: ImageSample, rng: np.random.Generator, crop_fraction: float = 0.8,
            flip: Optional[bool] = None) -> ImageSample:
    """
    画像を拡張

    Args:
        sample: 元画像
        rng: 乱数生成器（同じ状態なら同じ拡張になる）
        crop_fraction: 各空間次元に対する切り出し比率
        flip: 反転の強制指定（Noneの場合は確率0.5）

    Returns:
        拡張画像（is_augmented=True）

    Raises:
        ConfigurationError: 切り出し比率が (0, 1] の外
    """
    crop_h, crop_w = crop_size(sample.shape, crop_fraction)
    _, height, width = sample.shape

    top = int(rng.integers(0, height - crop_h + 1))
    left = int(rng.integers(0, width - crop_w + 1))
    do_flip = bool(rng.random() < 0.5) if flip is None else flip

    pixels = crop_and_resize(sample.pixels, top, left, crop_h, crop_w)
    if do_flip:
        pixels = horizontal_flip(pixels)

    return ImageSample(pixels, sample_id=sample.sample_id, is_augmented=True, label=sample.label)


def center_crop(sample: ImageSample, crop_fraction: float = 0.8) -> ImageSample:
    """テスト時の決定的な中央切り出し"""
    crop_h, crop_w = crop_size(sample.shape, crop_fraction)
    _, height, width = sample.shape
    pixels = crop_and_resize(sample.pixels, (height - crop_h) // 2, (width - crop_w) // 2, crop_h, crop_w)
    return ImageSample(pixels, sample_id=sample.sample_id, is_augmented=sample.is_augmented, label=sample.label)


def make_pair(sample: ImageSample, rng: np.random.Generator, crop_fraction: float = 0.8,
              pair_id: int = 0) -> AugmentedPair:
    """元画像とその拡張画像の組を作成"""
    return AugmentedPair(original=sample, augmented=augment(sample, rng, crop_fraction), pair_id=pair_id)
