"""embalign: judge-scored hard-negative mining, distribution-alignment
embedding training, joint pairwise/listwise reranking, and an
embed -> retrieve -> rerank inference path, verifiable end to end against
a synthetic oracle corpus."""

__version__ = "0.1.0"
