#!/usr/bin/env python3
"""
CentroidDML Setup Script

セントロイド基準の教師なし深層距離学習ツールのセットアップスクリプト
"""

from pathlib import Path

from setuptools import find_packages, setup

# プロジェクトルートの取得
project_root = Path(__file__).parent

# バージョン情報
VERSION = '0.1.0'
DESCRIPTION = 'CentroidDML - セントロイド基準の教師なし深層距離学習'
LONG_DESCRIPTION = """
CentroidDMLは、ラベルのない画像から検索用の埋め込みを学習するコマンドラインツールです。

主な特徴:
- RIMクラスタリングによる疑似ラベル
- セントロイド表現の再構成損失
- セントロイド基準のソフトマックス距離損失
- 有限差分による勾配検査
- Recall@K と NMI による評価
"""


def read_requirements(filename):
    """requirements.txtから依存関係を読み込む"""
    requirements_path = project_root / filename
    if requirements_path.exists():
        with open(requirements_path, 'r', encoding='utf-8') as f:
            return [
                line.split('#')[0].strip()
                for line in f
                if line.strip() and not line.startswith('#')
            ]
    return []


# README.mdの読み込み
readme_path = project_root / 'README.md'
if readme_path.exists():
    with open(readme_path, 'r', encoding='utf-8') as f:
        long_description = f.read()
else:
    long_description = LONG_DESCRIPTION

setup(
    name='centroid-dml',
    version=VERSION,
    description=DESCRIPTION,
    long_description=long_description,
    long_description_content_type='text/markdown',
    author='CentroidDML Development Team',

    packages=find_packages(include=['src', 'src.*']),
    include_package_data=True,

    install_requires=read_requirements('requirements.txt'),
    extras_require={
        'dev': read_requirements('requirements-dev.txt'),
        'test': [
            'pytest>=7.4.0',
            'pytest-cov>=4.1.0',
            'pytest-mock>=3.11.0',
            'pytest-timeout>=2.1.0',
            'hypothesis>=6.82.0',
        ],
    },

    python_requires='>=3.9',

    entry_points={
        'console_scripts': [
            'centroid-dml=src.main:main',
        ],
    },

    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Programming Language :: Python :: 3',
        'Operating System :: OS Independent',
        'Environment :: Console',
        'Natural Language :: Japanese',
    ],
    keywords=['metric-learning', 'unsupervised', 'clustering', 'embedding', 'retrieval'],
    zip_safe=False,
)
