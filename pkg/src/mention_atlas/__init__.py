"""Guidance for reusing phenotype-mention NLP models on new corpora.

The toolkit makes the language-pattern landscape of a mention set explicit:
mentions become context-embedding vectors, density clustering recovers the
patterns, and a reference phenotype embedding splits them into p-known
(performance predictable, skip re-validation) and p-unknown groups with small
representative samples. Waste metrics quantify the validation effort avoided.
"""

from .corpus import (
    Context,
    Document,
    MentionAnnotation,
    TokenSequence,
    build_training_sequences,
    inject_markups,
    load_annotations,
    load_corpus,
    parse_markup,
    render_markup,
    tokenize,
)
from .embedding import (
    EmbeddingModel,
    TrainConfig,
    load_model,
    loss_and_gradients,
    save_model,
    train_cbow,
)
from .guidance import (
    GuidancePartition,
    ReferenceStrategy,
    assumption_report,
    classify,
    reference_vector,
)
from .mention_space import (
    ClusterSet,
    MentionVector,
    cluster_mentions,
    clustered_percentage,
    vectorize_mention,
    vectorize_mentions,
)
from .metrics import (
    AccuracyReport,
    WasteReport,
    accuracy,
    build_waste_report,
    conv_sampling,
    duplicate_waste,
    imbalance_waste_saved,
    random_baseline_sp,
    separate_power,
)
from .ontology import (
    ConceptTree,
    choose_reference_phenotype,
    load_concept_tree,
    synonym_concept,
    toy_tree,
    tree_distance,
)
from .synth import PatternSpec, SynthConfig, generate, split

__version__ = "0.1.0"
