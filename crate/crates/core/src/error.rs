use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("self-loop on user {0:?}")]
    SelfLoop(String),
    #[error("score {0} outside 0..=100")]
    ScoreOutOfRange(u8),
    #[error("edge without co-actions")]
    EmptyEdge,
    #[error("duplicate edge {0:?}-{1:?}")]
    DuplicateEdge(String, String),
    #[error("unknown layer kind {0:?}")]
    UnknownLayerKind(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("expected {expected} pairs, found {found}")]
    KindMismatch { expected: crate::model::LayerKind, found: crate::model::LayerKind },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{malformed} of {total} lines malformed; first error at line {first_line}: {first_error}")]
    TooManyMalformed { malformed: usize, total: usize, first_line: usize, first_error: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimilarityError {
    #[error("empty transcript")]
    EmptyTranscript,
    #[error("image {width}x{height} smaller than the 9x8 hash grid")]
    ImageTooSmall { width: usize, height: usize },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    PixelBufferSize { expected: usize, actual: usize },
    #[error("no frames to compare")]
    NoFrames,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("layer {0} was built without evidence; temporal filtering needs per-pair time gaps")]
    EvidenceUnavailable(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("k must be positive")]
    NonPositiveK,
}

#[derive(Debug, Error)]
pub enum TuningError {
    #[error("labels must contain at least one positive and one negative pair")]
    DegenerateLabels,
    #[error("no threshold reaches precision = recall = 1")]
    NoPerfectPoint,
    #[error("empty precision-recall curve")]
    EmptyCurve,
    #[error("labels csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("labels csv line {line}: {message}")]
    BadLabel { line: usize, message: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("base post {0:?} lacks a transcript or frame hashes")]
    IncompleteBase(String),
    #[error("{reuse} row disagrees with the reference reuse table on {layer}")]
    MatrixMismatch { reuse: String, layer: String },
    #[error("invalid cluster spec: {0}")]
    InvalidCluster(String),
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("unknown export format {0:?}")]
    UnknownFormat(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("xml error: {0}")]
    Xml(String),
    #[error("malformed graph file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
