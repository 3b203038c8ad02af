use serde_json::{json, Value};

/// One line of the metrics log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub protocol: String,
    pub loss_total: Option<f64>,
    pub loss_infonce: Option<f64>,
    pub loss_kl_q: Option<f64>,
    pub loss_kl_k: Option<f64>,
    pub ce_loss: Option<f64>,
    pub top1: Option<f64>,
    pub seconds: f64,
}

impl MetricsRecord {
    pub fn new(epoch: usize, split: &str, protocol: &str) -> Self {
        Self {
            epoch,
            split: split.to_string(),
            protocol: protocol.to_string(),
            ..Self::default()
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "epoch": self.epoch,
            "split": self.split,
            "protocol": self.protocol,
            "loss_total": self.loss_total,
            "loss_infonce": self.loss_infonce,
            "loss_kl_q": self.loss_kl_q,
            "loss_kl_k": self.loss_kl_k,
            "ce_loss": self.ce_loss,
            "top1": self.top1,
            "seconds": self.seconds,
        })
    }

    pub fn to_json_line(&self) -> String {
        self.to_json().to_string()
    }

    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &MetricsRecord) -> bool {
        let mut a = self.clone();
        a.seconds = other.seconds;
        a == *other
    }
}
