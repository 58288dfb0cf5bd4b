use thiserror::Error;

/// Errors surfaced by configuration loading, the fabric, and the authority.
#[derive(Debug, Error)]
pub enum Error {
    #[error("word width {0} out of range 1..=256")]
    WidthOutOfRange(usize),

    #[error("input word is {input} bits wide, scenario width is {expected}")]
    WidthMismatch { input: usize, expected: usize },

    #[error("bad word literal `{0}`")]
    BadWordLiteral(String),

    #[error("swap in progress on slot {0}")]
    SwapInProgress(usize),

    #[error("slot {0} holds no programmed IP")]
    SlotNotProgrammed(usize),

    #[error("slot index {0} out of range")]
    SlotOutOfRange(usize),

    #[error("IP waiting queue is empty")]
    QueueEmpty,

    #[error("scenario config: {0}")]
    Config(String),

    #[error("authority: {0}")]
    Authority(String),

    #[error("log/trace misalignment first diverging at cycle {cycle}: {detail}")]
    TraceMisaligned { cycle: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
