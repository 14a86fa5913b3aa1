"""Soft multicast of video over block compressed sensing.

The package simulates the full chain: adaptive per-block sampling,
interleaved packetization, a Rayleigh-fading OFDM downlink with
importance-weighted subchannel and power allocation, and iterative
reconstruction with per-block adaptive transforms.
"""

from .channel import (ChannelRealization, TransmissionPlan, allocate_power,
                      allocate_subchannels, draw_channel, equal_power_plan,
                      packet_capacity, transmit)
from .codec import (MeasurementSet, SamplingMatrix, generate_sampling_matrix,
                    pseudo_inverse_init, sample_block, sample_frame)
from .config import ExperimentConfig, config_from_dict, load_config
from .errors import (AllocationError, BcscastError, BudgetError, ConfigError,
                     CorruptStreamError, DimensionError, RateError,
                     TransmissionError, TruncatedInputError)
from .frames import (BlockGrid, Frame, VideoSequence, compute_residual,
                     load_video, synthesize_video, tile_blocks, untile_blocks,
                     write_video)
from .importance import (ImportanceMap, block_mean_map, compute_importance_map,
                         frame_complexity, fuse_importance,
                         sobel_gradient_magnitude, spectral_residual_saliency)
from .metrics import bd_delta, bd_psnr, ms_ssim, psnr, sequence_ms_ssim, sequence_psnr
from .packets import (PacketBatch, SequenceMetadata, depacketize, packetize,
                      read_packet_dump, write_packet_dump)
from .ratecontrol import (allocate_block_rates, allocate_frame_rates,
                          metadata_overhead)
from .reconstruct import (ReconstructionParams, bcs_spl, build_adaptive_transform,
                          decode_sequence, estimate_noise_sigma,
                          estimate_signal_variance, recon_frame, soft_threshold,
                          wiener_smooth)

__version__ = "0.1.0"
