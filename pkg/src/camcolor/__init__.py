"""camcolor: learned color translation between camera JPEG output and a
canonical linear color space, with cycle-consistent dual training, camera
pipeline simulation, calibration, metrics, and object compositing."""

from .autodiff import Tensor, backward, gradient_check
from .calibrate import ColorMatrix, PatchSet, apply_color_matrix, fit_color_matrix
from .compositing import CompositeResult, RenderedObject, blend_raw, composite_object
from .metrics import delta_e_2000, feature_swap, psnr
from .network import (ArchConfig, TranslatorPair, forward_n1, forward_n2,
                      init_translator_pair, share_transform)
from .pipesim import (PairedSample, PipelineSpec, apply_pipeline,
                      generate_dataset, random_canonical_image, sample_pipeline)
from .training import TrainConfig, augment_pair, evaluate, total_loss, train

__version__ = "0.1.0"
