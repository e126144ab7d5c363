"""Toolkit for building emotion-annotated role-play corpora, composing
instruction-tuning sets from them, and serving retrieval-augmented
character chat with an evaluation harness on top."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    CATEGORIES,
    CATEGORY_CUS,
    CATEGORY_RAW,
    CATEGORY_SPE,
    EMOTION_LABELS,
    KIND_GENERAL,
    KIND_SPECIFIC,
    CharacterProfile,
    CorpusStats,
    Dialogue,
    InstructionRecord,
    ParseReport,
    Rejection,
    Utterance,
    compute_stats,
    parse_corpus,
    serialize_corpus,
    write_corpus,
)
from .errors import (  # noqa: F401
    ConfigError,
    ContentError,
    IntegrityError,
    RolekitError,
    SessionNotFoundError,
    StageError,
    TemplateError,
    TransportError,
    ValidationError,
)
from .gateway import Gateway, GatewayConfig, mock_gateway  # noqa: F401
