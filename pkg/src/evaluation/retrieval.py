"""
検索評価

テスト集合の埋め込みを抽出し、Recall@K（自分自身を除くユークリッド距離の
K近傍に同じクラスが含まれる割合）と NMI（予測分割と正解クラスの
正規化相互情報量、幾何平均で正規化）を計算します。
"""

import logging
from typing import Sequence, Tuple

import numpy as np
import torch
from scipy.spatial.distance import cdist
from scipy.special import entr

from src.data.augmentation import center_crop
from src.data.synthetic_dataset import SyntheticDataset
from src.domain.eval_report import EmbeddingIndex, EvalReport
from src.model.model_bundle import ModelBundle
from src.utils.exceptions import RetrievalUsageError
from src.utils.logging_config import performance_monitor

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 2, 4, 8)
CHUNK_SIZE = 256


def _forward_test_set(model: ModelBundle, dataset: SyntheticDataset,
                      crop_fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    """中央切り出し画像の (埋め込み, ヘッドのargmax) を計算"""
    samples = [center_crop(sample, crop_fraction) for sample in dataset.samples()]
    images = torch.from_numpy(np.stack([s.pixels for s in samples])).to(model.dtype)

    embeddings = []
    clusters = []
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for start in range(0, images.shape[0], CHUNK_SIZE):
            _, chunk_embeddings, logits = model(images[start:start + CHUNK_SIZE])
            embeddings.append(chunk_embeddings.double().numpy())
            clusters.append(logits.argmax(dim=1).numpy())
    model.train(was_training)

    return np.concatenate(embeddings), np.concatenate(clusters).astype(np.int64)


def extract_embeddings(model: ModelBundle, dataset: SyntheticDataset, crop_fraction: float = 0.8) -> EmbeddingIndex:
    """
    テスト集合の埋め込みインデックスを作成

    Args:
        model: 学習済みモデル
        dataset: テスト集合
        crop_fraction: 中央切り出しの比率

    Returns:
        単位ノルムの埋め込みと正解ラベル
    """
    embeddings, _ = _forward_test_set(model, dataset, crop_fraction)
    return EmbeddingIndex(embeddings, dataset.labels)


def recall_at_k(index: EmbeddingIndex, k: int) -> float:
    """
    Recall@K

    距離が同じ場合は行番号の小さい方を近いとみなします。

    Raises:
        RetrievalUsageError: K < 1 または K >= 行数
    """
    n = len(index)
    if k < 1 or k >= n:
        raise RetrievalUsageError(f"K={k} は 1 以上かつ行数 {n} 未満である必要があります",
                                  details={"k": k, "rows": n})

    distances = cdist(index.embeddings, index.embeddings, metric='sqeuclidean')
    np.fill_diagonal(distances, np.inf)
    neighbors = np.argsort(distances, axis=1, kind='stable')[:, :k]
    hits = (index.labels[neighbors] == index.labels[:, None]).any(axis=1)
    return float(hits.mean())


def _entropy(probabilities: np.ndarray) -> float:
    return float(entr(probabilities).sum())


def nmi(predicted: Sequence[int], truth: Sequence[int]) -> float:
    """
    正規化相互情報量 I(P;T) / sqrt(H(P)·H(T))

    両方が1ブロックなら1、片方だけが1ブロックなら0とします。

    Raises:
        RetrievalUsageError: 長さが異なる、または空の場合
    """
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.size == 0:
        raise RetrievalUsageError("予測と正解は同じ長さの空でない列である必要があります")

    _, p_ids = np.unique(predicted, return_inverse=True)
    _, t_ids = np.unique(truth, return_inverse=True)
    contingency = np.zeros((p_ids.max() + 1, t_ids.max() + 1))
    np.add.at(contingency, (p_ids, t_ids), 1.0)
    joint = contingency / predicted.size

    h_p = _entropy(joint.sum(axis=1))
    h_t = _entropy(joint.sum(axis=0))
    single_p = contingency.shape[0] == 1
    single_t = contingency.shape[1] == 1
    if single_p and single_t:
        return 1.0
    if single_p or single_t:
        return 0.0

    mutual_information = max(h_p + h_t - _entropy(joint), 0.0)
    return float(min(mutual_information / np.sqrt(h_p * h_t), 1.0))


@performance_monitor("evaluate")
def evaluate(model: ModelBundle, dataset: SyntheticDataset, ks: Sequence[int] = DEFAULT_KS,
             crop_fraction: float = 0.8) -> EvalReport:
    """
    テスト集合で Recall@K と NMI を評価

    NMIの予測分割はクラスタリングヘッドのargmaxです。

    Returns:
        評価レポート
    """
    embeddings, clusters = _forward_test_set(model, dataset, crop_fraction)
    index = EmbeddingIndex(embeddings, dataset.labels)
    report = EvalReport(
        recall_at={int(k): recall_at_k(index, int(k)) for k in ks},
        nmi=nmi(clusters, index.labels),
        num_queries=len(index),
        extras={'predicted_clusters': int(np.unique(clusters).size)}
    )
    logger.info(f"評価完了: R@1={report.recall_at.get(1, float('nan')):.4f}, NMI={report.nmi:.4f}")
    return report
