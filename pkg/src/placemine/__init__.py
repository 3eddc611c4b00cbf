"""placemine: geo-visual hard-batch mining and retrieval evaluation.

Library layout:

- descriptors: residual patch reweighting and bilinear aggregation
- interact: cross-image segment attention over descriptor batches
- geograph: per-epoch geo-visual affinity graph construction
- sampler: greedy weighted clique sampling and batch assembly
- evalharness: Recall@N protocols, intra-class distance, PCA compaction
- synth: seeded synthetic dataset with per-epoch embedding drift
- storeio / params: binary stores, CSV manifests, config files
- pipeline / cli: multi-epoch orchestration and the command line
"""

from .descriptors import (
    AggregationParams,
    GlobalDescriptor,
    PatchDescriptorSet,
    SoftPParams,
    TwoLayerMLP,
    cfp_aggregate,
    default_aggregation_params,
    default_softp_params,
    l2_normalize,
    random_mlp,
    softp_modulate,
    variance_shift_estimate,
)
from .geograph import (
    AffinityGraph,
    GraphConfig,
    PlaceRecord,
    affinity_graph,
    build_geo_adjacency,
    extract_clique,
    geo_distance,
    rebuild_epoch,
    sample_city,
    sample_similar_places,
)
from .interact import (
    EncoderParams,
    SegmentLayout,
    encoder_forward,
    random_encoder_params,
    refine_descriptors,
    restore_layout,
    segment_and_rearrange,
)
from .sampler import (
    BatchPlan,
    SampledClique,
    assemble_epoch_batches,
    greedy_expand,
    sample_clique,
    seed_scores,
    select_seed,
)
from .evalharness import (
    ItemMeta,
    MatchCriterion,
    RetrievalIndex,
    aid_metric,
    format_results,
    is_match,
    pca_fit,
    pca_project,
    recall_at_n,
    retrieve_top_n,
)
from .storeio import (
    StoreFormatError,
    manifest_to_metadata,
    manifest_to_places,
    read_batch_manifest,
    read_manifest_csv,
    read_named_stores,
    read_store,
    write_batch_manifest,
    write_manifest_csv,
    write_named_stores,
    write_store,
)
from .synth import (
    SynthConfig,
    synth_epoch_embeddings,
    synth_generate,
    synth_manifest_rows,
)
from .pipeline import PipelineConfig, run_epoch_pipeline
from .rng import substream

__version__ = "0.1.0"
