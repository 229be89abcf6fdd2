"""Exposure-bracket HDR synthesis, log-domain merging, and a FiLM-conditioned
residual exposure head trained in a lossless latent space."""

from .bracket import ExposureBracket, clipping_stats, ev_range, expose, generate_bracket
from .head import ExposureHead, HeadConfig, ablate_no_film, fourier_embed, loss_ev, train
from .imageio import LdrImage, RadianceMap, read_pfm, read_ppm, write_pfm, write_ppm
from .latent import decode, encode, posterior_stats, sample
from .merge import MergeConfig, blend_with_input, gamma_expand, merge_bracket
from .metrics import dynamic_range_stops, eval_l2h, l2h, latent_trajectory, luminance
from .scenegen import SceneSpec, generate_corpus, generate_scene

__version__ = "0.1.0"
