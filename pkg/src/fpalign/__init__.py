"""Audio-fingerprint matching and temporal alignment toolkit.

Pipeline components: frame-embedding projection to unit fingerprints,
exact/IVF inner-product search, spectral-peak landmark hashing, robust
trajectory fitting for segment alignment, degradation-based query
generation, and F1/hit-rate evaluation — all behind the ``fpalign`` CLI.
"""

from .alignment import (
    AlignedSegment,
    AlignParams,
    MatchPoint,
    Trajectory,
    align,
    collect_matches,
    fit_trajectories_seeded,
    huber_fit,
    huber_fit_xy,
    r_squared,
    select_best,
    trajectory_to_segment,
)
from .augment import (
    AudioBuffer,
    AugmentationSpec,
    add_noise_snr,
    biquad_filter,
    convolve_rir,
    echo,
    make_query_set,
    pitch_shift,
    read_wav,
    time_stretch,
    write_wav,
)
from .embedding import (
    EmbeddingMatrix,
    Fingerprint,
    ProjectionWeights,
    apply_projection,
    fingerprint_frames,
    l2_normalize,
    read_embeddings,
    read_projection_weights,
    write_embeddings,
    write_projection_weights,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateVectorError,
    FpalignError,
    ParameterError,
    ParseError,
    ShapeError,
    UnderdeterminedError,
)
from .index import (
    ExactIndex,
    IvfIndex,
    IvfParams,
    SearchResult,
    build_exact,
    build_ivf,
    kmeans,
    load_index,
    save_index,
    search,
    search_batch,
)
from .metrics import (
    Annotation,
    bbox_f1,
    evaluate_run,
    iou_2d,
    length_f1,
    track_f1,
)
from .peaks import (
    Landmark,
    PeakDB,
    PeakParams,
    build_peak_db,
    fingerprint_signal,
    make_landmarks,
    match_peaks,
    pick_peaks,
    read_peak_db,
    stft_magnitude,
    write_peak_db,
)
from .retrieval import (
    HitRateReport,
    RetrievalConfig,
    TrackQueryResult,
    identify,
    run_track_eval,
    top1_hit_rate,
)

__version__ = "0.1.0"
