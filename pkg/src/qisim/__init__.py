"""One-bit quanta image sensor models, design formulas and Monte Carlo validation."""

__version__ = "0.1.0"

from .specfun import DomainError, NoCrossingError, lambert_w0, modified_lambert_v  # noqa: E402
from .model import (  # noqa: E402
    CisConfig,
    ExposureGrid,
    QisConfig,
    SensorParams,
    SnrCurve,
    bit_density,
    omega_of_sigma,
    read_noise_bound,
    read_noise_delta,
    snr_cis,
    snr_qis,
    snr_qis_approx,
)
from .design import (  # noqa: E402
    UNBOUNDED,
    BracketSchedule,
    DynamicRangeReport,
    dynamic_range_bracket,
    dynamic_range_cis,
    dynamic_range_qis,
    frame_constant,
    optimal_exposure,
    optimal_frames,
)
from .sim import (  # noqa: E402
    EstimateMap,
    ExposureMap,
    FrameStack,
    capture_cis,
    capture_qis,
    empirical_bit_density,
    empirical_snr,
    image_metrics,
    reconstruct_mle,
    sample_voltage,
)
