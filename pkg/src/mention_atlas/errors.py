"""Exception types shared across the package."""


class MentionAtlasError(Exception):
    """Base class for all package-specific errors."""


class CorpusFormatError(MentionAtlasError):
    """A corpus, annotation, or ontology file failed to parse or validate."""


class SpanAlignmentError(MentionAtlasError):
    """A mention span does not align with token boundaries."""


class OverlappingSpansError(MentionAtlasError):
    """Two or more mention spans overlap within one document."""

    def __init__(self, mention_ids):
        self.mention_ids = tuple(mention_ids)
        super().__init__(
            "overlapping mention spans: " + ", ".join(self.mention_ids)
        )


class UnknownConceptError(MentionAtlasError):
    """A concept id is not present in the concept tree."""


class UnreachableConceptError(MentionAtlasError):
    """Two concepts live in different trees of the forest."""


class ModelFormatError(MentionAtlasError):
    """An embedding model file is corrupt or inconsistent."""


class TrainingDivergedError(MentionAtlasError):
    """Training produced a non-finite loss."""


class UnrepresentableMentionError(MentionAtlasError):
    """Every token in a mention's context window is out of vocabulary."""

    def __init__(self, mention_id: str):
        self.mention_id = mention_id
        super().__init__(f"unrepresentable mention: {mention_id}")
