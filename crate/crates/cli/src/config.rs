//! Flat `key = value` configuration files.

use imgauth::recognizer::PipelineConfig;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: bad value for `{key}`: {value}")]
    BadValue { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

/// Parses `WxH`.
pub fn parse_size(v: &str) -> Option<(usize, usize)> {
    let (w, h) = v.split_once(['x', 'X'])?;
    Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
}

/// Sets one key on `cfg`. Returns `None` for an unparsable value.
pub fn apply_key(cfg: &mut PipelineConfig, key: &str, value: &str) -> Option<Option<()>> {
    fn num<T: std::str::FromStr>(v: &str) -> Option<T> {
        v.parse().ok()
    }
    let ok = match key {
        "threshold" => num(value).map(|v| cfg.detector.threshold = v),
        "derivative_orders" => parse_list(value).map(|v| cfg.detector.derivative_orders = v),
        "f_lo" => num(value).map(|v| cfg.detector.f_lo = v),
        "flat_floor" => num(value).map(|v| cfg.detector.flat_floor = v),
        "max_lag" => match value {
            "auto" => Some(cfg.detector.max_lag = None),
            _ => num(value).map(|v| cfg.detector.max_lag = Some(v)),
        },
        "filter_size" => num(value).map(|v| cfg.preproc.filter_size = v),
        "stretch_low_pct" => num(value).map(|v| cfg.preproc.stretch_low_pct = v),
        "stretch_high_pct" => num(value).map(|v| cfg.preproc.stretch_high_pct = v),
        "target_size" => parse_size(value).map(|v| cfg.preproc.target_size = v),
        "dct_keep" => num(value).map(|v| cfg.dct_keep = v),
        "pca_components" => match value {
            "auto" => Some(cfg.pca_components = None),
            _ => num(value).map(|v| cfg.pca_components = Some(v)),
        },
        "hidden" => num(value).map(|v| cfg.hidden = v),
        "learning_rate" => num(value).map(|v| cfg.train.learning_rate = v),
        "momentum" => num(value).map(|v| cfg.train.momentum = v),
        "error_goal" => num(value).map(|v| cfg.train.error_goal = v),
        "max_epochs" => num(value).map(|v| cfg.train.max_epochs = v),
        "seed" => num(value).map(|v| cfg.train.seed = v),
        _ => return None,
    };
    Some(ok)
}

/// Applies configuration text on top of `base` and validates the result.
pub fn parse_config(text: &str, mut base: PipelineConfig) -> Result<PipelineConfig, ConfigError> {
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            msg: "expected key = value".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match apply_key(&mut base, key, value) {
            None => {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.into(),
                })
            }
            Some(None) => {
                return Err(ConfigError::BadValue {
                    line: line_no,
                    key: key.into(),
                    value: value.into(),
                })
            }
            Some(Some(())) => {}
        }
    }
    base.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(base)
}

/// Renders a full configuration file.
pub fn render_config(cfg: &PipelineConfig) -> String {
    let d = &cfg.detector;
    let orders: Vec<String> = d.derivative_orders.iter().map(u32::to_string).collect();
    let mut out = String::new();
    let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
    kv("threshold", d.threshold.to_string());
    kv("derivative_orders", orders.join(","));
    kv("f_lo", d.f_lo.to_string());
    kv("flat_floor", d.flat_floor.to_string());
    kv("max_lag", d.max_lag.map_or("auto".into(), |m| m.to_string()));
    kv("filter_size", cfg.preproc.filter_size.to_string());
    kv("stretch_low_pct", cfg.preproc.stretch_low_pct.to_string());
    kv("stretch_high_pct", cfg.preproc.stretch_high_pct.to_string());
    let (w, h) = cfg.preproc.target_size;
    kv("target_size", format!("{w}x{h}"));
    kv("dct_keep", cfg.dct_keep.to_string());
    kv("pca_components", cfg.pca_components.map_or("auto".into(), |m| m.to_string()));
    kv("hidden", cfg.hidden.to_string());
    kv("learning_rate", cfg.train.learning_rate.to_string());
    kv("momentum", cfg.train.momentum.to_string());
    kv("error_goal", cfg.train.error_goal.to_string());
    kv("max_epochs", cfg.train.max_epochs.to_string());
    kv("seed", cfg.train.seed.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let d = PipelineConfig::default();
        assert_eq!(parse_config(&render_config(&d), PipelineConfig::default()).unwrap(), d);
        assert_eq!(render_config(&d).lines().count(), 17);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# experiment\nhidden = 7   # small\n\nthreshold=12.5\ntarget_size = 24x20\nderivative_orders = 1\n";
        let c = parse_config(text, PipelineConfig::default()).unwrap();
        assert_eq!(c.hidden, 7);
        assert_eq!(c.detector.threshold, 12.5);
        assert_eq!(c.preproc.target_size, (24, 20));
        assert_eq!(c.detector.derivative_orders, vec![1]);
    }

    #[test]
    fn rejects_bad_input() {
        let d = PipelineConfig::default;
        assert!(matches!(parse_config("colour = red", d()), Err(ConfigError::UnknownKey { line: 1, .. })));
        assert!(matches!(parse_config("\nhidden = many", d()), Err(ConfigError::BadValue { line: 2, .. })));
        assert!(matches!(parse_config("hidden", d()), Err(ConfigError::Syntax { .. })));
        assert!(matches!(parse_config("filter_size = 4", d()), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config("momentum = 1", d()), Err(ConfigError::Invalid(_))));
    }
}
