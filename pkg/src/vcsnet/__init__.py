"""Video snapshot compressive imaging: sensing model, GAP-TV and a two-stage deep unfolding network."""
from .estimators import GapTVReconstructor, MeasurementSimulator, UnfoldingReconstructor
from .exceptions import CapacityError, ConfigError, DimensionError, FileFormatError, NumericError, VCSError
from .gap_tv import GapTvConfig, gap_tv_reconstruct, tv_denoise
from .io import RunConfig, export_pgm_ppm, load_checkpoint, read_vcub, save_checkpoint, write_vcub
from .metrics import (EvalReport, eval_flexibility_masks, eval_flexibility_scale, psnr, ssim, ssim_cube,
                      tiled_reconstruct)
from .projection import dense_phi, gap_project
from .sensing import (MaskCube, Measurement, RefFrames, bayer_mosaic, forward_measure, forward_measure_color,
                      generate_masks, normalized_measurement, reference_frames)
from .training import TrainConfig, mse_loss, stage_wise_loss, synth_dataset, train
from .unfold_net import ModelConfig, UnfoldModel, reconstruct_color, reconstruct_gray, stage_forward_gray

__version__ = "0.1.0"
