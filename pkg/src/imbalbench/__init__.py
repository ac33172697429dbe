"""Imbalanced multiclass classification toolkit.

Loss functions for class imbalance (weighted, class-balanced and focal
cross entropy) with analytic gradients, an SGD training protocol with step
learning-rate decay and seeded replications, micro-F1 / confusion-matrix
evaluation, and cosine-similarity analysis of learned class features.
"""

__version__ = "0.1.0"

from .dataset import (AugmentPolicy, ClassCounts, LabeledDataset, Sample, SplitRatios,
                      augment, load_dataset, normalize_raster, one_hot, stratified_split)
from .kernels import BACKEND as KERNEL_BACKEND
from .losses import (CBParams, ClassWeights, FocalParams, LossSpec, cb_loss, ce_loss,
                     explicit_weights, focal_loss, inverse_proportion_weights, loss_grad_logits,
                     softmax, wce_loss)
from .metrics import (ConfusionMatrix, confusion_matrix, micro_f1, per_class_recall,
                      row_normalize)
from .model import Model, ModelArch, backward, count_parameters, forward, init_model
from .similarity import (SimilarityConfig, SimilarityMatrix, class_pair_similarity, cosine,
                         similarity_matrix)
from .trainer import BenchmarkReport, TrainConfig, TrainHistory, lr_at, run_benchmark, sgd_step, train
