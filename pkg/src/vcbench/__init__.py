"""vcbench: an evaluation harness for compression-for-machines.

Local, remote, and split inference pipelines over image and video datasets,
with pluggable codecs for pixels or packed feature tensors, task metrics
(mAP, MOTA), rate aggregation, and BD-rate comparison.
"""

from .annotations import (
    DatasetHandle,
    GroundTruthObject,
    frame_item_id,
    parse_coco_annotations,
    parse_track_csv,
    write_coco_annotations,
    write_track_csv,
)
from . import conformance
from .backends import (
    BUILTIN_BACKENDS,
    SPLIT_REGISTRY,
    BackendCapabilities,
    BackendError,
    BackendSession,
    Detection,
    SplitPointSpec,
    SyntheticBackend,
    TrackedBox,
    builtin_serve_command,
    registry_tensor_count,
    serve,
    synthetic_tracker,
)
from .codecs import (
    ALL_INTRA,
    LOW_DELAY,
    CodecParams,
    decode,
    decode_null,
    decode_reference,
    distortion_bound,
    encode_null,
    encode_reference,
    qp_to_step,
)
from .errors import (
    AdapterError,
    CorruptionError,
    CurveMonotonicityError,
    CurveOverlapError,
    FormatError,
    IncompleteRunError,
    ProtocolError,
    RunError,
    SessionError,
    TruncationError,
    ValidationError,
    VcbenchError,
)
from .external_codec import ExternalCodec, ExternalCodecSpec
from .frames import (
    MONO_400,
    YUV_420,
    PlanarFrame,
    RgbImage,
    mono_frame,
    mono_to_rgb,
    read_ppm,
    read_yuv,
    rgb_to_luma,
    round_half_away,
    write_ppm,
    write_yuv,
    yuv_to_rgb,
)
from .harness import (
    LoadedDataset,
    RunConfig,
    RunOutcome,
    load_dataset,
    parse_run_config,
    run,
    run_config_file,
)
from .metrics import (
    MapResult,
    MotaResult,
    RateAccuracyCurve,
    RatePoint,
    RateRecord,
    bd_rate,
    compute_rate,
    evaluate_map,
    evaluate_mota,
    iou,
    read_curve_csv,
    read_detections_jsonl,
    write_curve_csv,
    write_detections_jsonl,
)
from .packing import (
    FeatureTensor,
    FeatureTensorSet,
    PackedFrameSet,
    PackingMetadata,
    TensorLayout,
    deserialize_metadata,
    pack,
    serialize_metadata,
    unpack,
)
from .report import emit_report, render_curve_svg, write_bd_table
from .rng import SplitMix64
from .synthetic import SyntheticSceneSpec, generate_synthetic_dataset
from .tensorfile import read_tensor_file, write_tensor_file

__version__ = "0.1.0"
