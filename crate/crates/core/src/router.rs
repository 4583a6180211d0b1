//! API fallback: call proposal, strict validation against the catalog, and
//! execution over HTTP.
//!
//! A proposed [`ApiCall`] can name anything, including APIs or parameters
//! that do not exist. Only [`validate`] produces a [`ValidatedCall`], and only
//! a `ValidatedCall` can be executed.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};
use thiserror::Error;

use crate::http::{self, HttpError};
use crate::schema_index::{ApiSchema, ParamType};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiCall {
    pub schema_name: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, Value>,
}

/// An [`ApiCall`] that passed [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedCall(ApiCall);

impl ValidatedCall {
    pub fn call(&self) -> &ApiCall {
        &self.0
    }

    pub fn into_inner(self) -> ApiCall {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiResponse {
    pub status: ApiStatus,
    pub body: String,
    pub latency_ms: u64,
}

impl ApiResponse {
    pub fn is_ok(&self) -> bool {
        self.status == ApiStatus::Ok
    }
}

#[derive(Debug, Error)]
pub enum CallerError {
    #[error("no candidate schemas")]
    NoCandidates,
    #[error("tool caller unreachable: {0}")]
    Unreachable(String),
    #[error("unparseable tool call: {0}")]
    Unparseable(String),
    #[error("cannot fill required parameter {parameter:?} of {schema:?} from the query")]
    CannotFill { schema: String, parameter: String },
}

/// Which catalog invariant a rejected call broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValidationCategory {
    HallucinatedApi,
    HallucinatedParameter,
    MissingParameter,
    TypeMismatch,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("hallucinated api: no schema named {0:?}")]
    HallucinatedApi(String),
    #[error("hallucinated parameter: {schema:?} has no parameter {parameter:?}")]
    HallucinatedParameter { schema: String, parameter: String },
    #[error("missing parameter: {schema:?} requires {parameter:?}")]
    MissingParameter { schema: String, parameter: String },
    #[error("type error: {schema:?}.{parameter} expects {expected}, got {found}")]
    TypeMismatch { schema: String, parameter: String, expected: ParamType, found: String },
}

impl ValidationError {
    pub fn category(&self) -> ValidationCategory {
        match self {
            ValidationError::HallucinatedApi(_) => ValidationCategory::HallucinatedApi,
            ValidationError::HallucinatedParameter { .. } => ValidationCategory::HallucinatedParameter,
            ValidationError::MissingParameter { .. } => ValidationCategory::MissingParameter,
            ValidationError::TypeMismatch { .. } => ValidationCategory::TypeMismatch,
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
        })
    }
}

/// Turns a query and candidate schemas into a (possibly invalid) call.
pub trait ToolCaller: Send + Sync {
    fn propose_call(&self, query: &str, candidates: &[ApiSchema]) -> Result<ApiCall, CallerError>;
}

pub fn propose_call(query: &str, candidates: &[ApiSchema], caller: &dyn ToolCaller) -> Result<ApiCall, CallerError> {
    if candidates.is_empty() {
        return Err(CallerError::NoCandidates);
    }
    caller.propose_call(query, candidates)
}

/// Reference tool caller, a deterministic test double.
///
/// Picks the candidate whose name and description share the most content
/// terms with the query (earlier candidates win ties). Required string
/// parameters get the query's longest run of capitalized words, numeric ones
/// the first number in the query. Anything else it cannot fill is an error.
/// Optional parameters are left out.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeywordToolCaller;

impl ToolCaller for KeywordToolCaller {
    fn propose_call(&self, query: &str, candidates: &[ApiSchema]) -> Result<ApiCall, CallerError> {
        let query_terms = text::content_terms(query);
        let mut best: Option<(&ApiSchema, usize)> = None;
        for schema in candidates {
            let terms = text::content_terms(&format!("{} {}", schema.name, schema.description));
            let shared = query_terms.intersection(&terms).count();
            if best.is_none_or(|(_, b)| shared > b) {
                best = Some((schema, shared));
            }
        }
        let (schema, _) = best.ok_or(CallerError::NoCandidates)?;

        let mut arguments = BTreeMap::new();
        for param in schema.parameters.iter().filter(|p| p.required) {
            let value = match param.param_type {
                ParamType::String => longest_capitalized_span(query).map(Value::String),
                ParamType::Integer => first_number(query)
                    .filter(|n| n.fract() == 0.0 && n.abs() < 9.0e15)
                    .map(|n| Value::Number(Number::from(n as i64))),
                ParamType::Number => first_number(query).and_then(Number::from_f64).map(Value::Number),
                ParamType::Boolean => None,
            };
            let value = value.ok_or_else(|| CallerError::CannotFill {
                schema: schema.name.clone(),
                parameter: param.name.clone(),
            })?;
            arguments.insert(param.name.clone(), value);
        }
        Ok(ApiCall { schema_name: schema.name.clone(), arguments })
    }
}

fn trim_punct(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Longest run of consecutive capitalized words (most words, then most
/// characters; later runs win ties). Punctuation after a word ends the run.
pub fn longest_capitalized_span(query: &str) -> Option<String> {
    let mut spans: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for raw in query.split_whitespace() {
        let word = trim_punct(raw);
        if word.chars().next().is_some_and(char::is_uppercase) {
            current.push(word);
            let ends_clause = raw.ends_with([',', ';', ':', '?', '!', '.']);
            if ends_clause {
                spans.push(std::mem::take(&mut current));
            }
        } else if !current.is_empty() {
            spans.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        spans.push(current);
    }
    spans
        .into_iter()
        .max_by_key(|s| (s.len(), s.iter().map(|w| w.len()).sum::<usize>()))
        .map(|s| s.join(" "))
}

/// First whitespace-delimited token that parses as a number, ignoring
/// surrounding punctuation other than a leading minus sign.
pub fn first_number(query: &str) -> Option<f64> {
    query.split_whitespace().find_map(|raw| {
        let body = raw.trim_end_matches(|c: char| !c.is_ascii_digit());
        let body = body.trim_start_matches(|c: char| !(c.is_ascii_digit() || c == '-'));
        body.replace(',', "").parse::<f64>().ok().filter(|n| n.is_finite())
    })
}

fn type_name(value: &Value) -> String {
    match value {
        Value::Null => "null".into(),
        Value::Bool(_) => "boolean".into(),
        Value::Number(n) if n.is_i64() || n.is_u64() => "integer".into(),
        Value::Number(_) => "number".into(),
        Value::String(_) => "string".into(),
        Value::Array(_) => "array".into(),
        Value::Object(_) => "object".into(),
    }
}

fn matches_type(value: &Value, expected: ParamType) -> bool {
    match expected {
        ParamType::String => value.is_string(),
        ParamType::Integer => value.is_i64() || value.is_u64(),
        ParamType::Number => value.is_number(),
        ParamType::Boolean => value.is_boolean(),
    }
}

/// Checks a call against the catalog. Checks run in a fixed order: schema
/// name, unknown arguments, missing required parameters, argument types.
pub fn validate(call: &ApiCall, catalog: &[ApiSchema]) -> Result<ValidatedCall, ValidationError> {
    let schema = catalog
        .iter()
        .find(|s| s.name == call.schema_name)
        .ok_or_else(|| ValidationError::HallucinatedApi(call.schema_name.clone()))?;
    if let Some(unknown) = call.arguments.keys().find(|k| schema.parameter(k).is_none()) {
        return Err(ValidationError::HallucinatedParameter { schema: schema.name.clone(), parameter: unknown.clone() });
    }
    if let Some(missing) = schema.parameters.iter().find(|p| p.required && !call.arguments.contains_key(&p.name)) {
        return Err(ValidationError::MissingParameter { schema: schema.name.clone(), parameter: missing.name.clone() });
    }
    for (name, value) in &call.arguments {
        let param = schema.parameter(name).expect("checked above");
        if !matches_type(value, param.param_type) {
            return Err(ValidationError::TypeMismatch {
                schema: schema.name.clone(),
                parameter: name.clone(),
                expected: param.param_type,
                found: type_name(value),
            });
        }
    }
    Ok(ValidatedCall(call.clone()))
}

/// Wire body of an API invocation.
#[derive(Debug, Serialize, Deserialize)]
pub struct InvocationBody {
    pub arguments: BTreeMap<String, Value>,
}

/// POSTs `{"arguments": {...}}` to the schema's endpoint. Every failure,
/// including timeouts and unreachable hosts, comes back as an error response.
pub fn execute(call: &ValidatedCall, catalog: &[ApiSchema], timeout_ms: u64, bearer_token: Option<&str>) -> ApiResponse {
    let started = Instant::now();
    let elapsed = || started.elapsed().as_millis() as u64;
    let call = call.call();
    let Some(schema) = catalog.iter().find(|s| s.name == call.schema_name) else {
        return ApiResponse {
            status: ApiStatus::Error,
            body: format!("schema {:?} not in catalog", call.schema_name),
            latency_ms: elapsed(),
        };
    };
    let body = InvocationBody { arguments: call.arguments.clone() };
    match http::post_json(&schema.endpoint, &body, bearer_token, Duration::from_millis(timeout_ms)) {
        Ok(reply) if reply.is_success() => ApiResponse { status: ApiStatus::Ok, body: reply.body, latency_ms: elapsed() },
        Ok(reply) => ApiResponse {
            status: ApiStatus::Error,
            body: format!("HTTP {}: {}", reply.status, reply.body),
            latency_ms: elapsed(),
        },
        Err(e @ HttpError::Timeout(_)) => ApiResponse { status: ApiStatus::Error, body: e.to_string(), latency_ms: elapsed() },
        Err(e) => ApiResponse { status: ApiStatus::Error, body: e.to_string(), latency_ms: elapsed() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema_index::ApiParameter;
    use serde_json::json;

    fn param(name: &str, ty: ParamType, required: bool) -> ApiParameter {
        ApiParameter { name: name.into(), param_type: ty, required, description: String::new() }
    }

    fn schema(name: &str, description: &str, parameters: Vec<ApiParameter>) -> ApiSchema {
        ApiSchema { name: name.into(), description: description.into(), parameters, endpoint: format!("http://127.0.0.1:9/{name}") }
    }

    fn catalog() -> Vec<ApiSchema> {
        vec![
            schema(
                "stock_price",
                "latest share price for a company",
                vec![param("company", ParamType::String, true), param("days", ParamType::Integer, false)],
            ),
            schema("weather_now", "current temperature in a city", vec![param("city", ParamType::String, true)]),
        ]
    }

    fn call(name: &str, args: Value) -> ApiCall {
        let arguments = args.as_object().unwrap().clone().into_iter().collect();
        ApiCall { schema_name: name.into(), arguments }
    }

    #[test]
    fn single_candidate_without_required_params() {
        let only = [schema("market_hours", "is the exchange open", vec![param("tz", ParamType::String, false)])];
        let c = propose_call("is it open", &only, &KeywordToolCaller).unwrap();
        assert_eq!(c, ApiCall { schema_name: "market_hours".into(), arguments: BTreeMap::new() });
    }

    #[test]
    fn keyword_match_selects_named_candidate() {
        let c = propose_call("What is the weather_now in Oslo?", &catalog(), &KeywordToolCaller).unwrap();
        assert_eq!(c.schema_name, "weather_now");
        assert_eq!(c.arguments["city"], json!("Oslo"));

        let c = propose_call("share price of Acme Widget Works today", &catalog(), &KeywordToolCaller).unwrap();
        assert_eq!(c.schema_name, "stock_price");
        assert_eq!(c.arguments["company"], json!("Acme Widget Works"));
    }

    #[test]
    fn empty_candidates_and_unfillable_params() {
        assert!(matches!(propose_call("x", &[], &KeywordToolCaller), Err(CallerError::NoCandidates)));
        let err = propose_call("stock price please", &catalog()[..1], &KeywordToolCaller).unwrap_err();
        assert!(matches!(err, CallerError::CannotFill { ref parameter, .. } if parameter == "company"));
    }

    #[test]
    fn numeric_params_take_first_number() {
        let s = [schema("top_scorers", "leading scorers", vec![param("limit", ParamType::Integer, true), param("min", ParamType::Number, true)])];
        let c = propose_call("show the top 5 scorers above 2.5 goals", &s, &KeywordToolCaller).unwrap();
        assert_eq!(c.arguments["limit"], json!(5));
        assert_eq!(c.arguments["min"], json!(5.0));
        let err = propose_call("top 2.5 scorers", &s, &KeywordToolCaller).unwrap_err();
        assert!(matches!(err, CallerError::CannotFill { .. }));
    }

    #[test]
    fn capitalized_spans() {
        assert_eq!(longest_capitalized_span("What is the price of Zorblax Industries?").as_deref(), Some("Zorblax Industries"));
        assert_eq!(longest_capitalized_span("What about Paris?").as_deref(), Some("Paris"));
        assert_eq!(longest_capitalized_span("Rome, Milan or Turin").as_deref(), Some("Turin"));
        assert_eq!(longest_capitalized_span("all lowercase"), None);
    }

    #[test]
    fn numbers_with_punctuation() {
        assert_eq!(first_number("in 1,200 days"), Some(1200.0));
        assert_eq!(first_number("was it (-3.5)?"), Some(-3.5));
        assert_eq!(first_number("none here"), None);
    }

    #[test]
    fn valid_call_passes_unchanged() {
        let c = call("stock_price", json!({"company": "Acme", "days": 3}));
        assert_eq!(validate(&c, &catalog()).unwrap().into_inner(), c);
    }

    #[test]
    fn each_violation_gets_its_category() {
        let cat = catalog();
        let cases = [
            (call("stock_prices", json!({"company": "Acme"})), ValidationCategory::HallucinatedApi),
            (call("stock_price", json!({"company": "Acme", "foo": 1})), ValidationCategory::HallucinatedParameter),
            (call("stock_price", json!({"days": 1})), ValidationCategory::MissingParameter),
            (call("stock_price", json!({"company": 7})), ValidationCategory::TypeMismatch),
            (call("stock_price", json!({"company": "Acme", "days": 1.5})), ValidationCategory::TypeMismatch),
            (call("stock_price", json!({"company": null})), ValidationCategory::TypeMismatch),
        ];
        for (c, expected) in cases {
            assert_eq!(validate(&c, &cat).unwrap_err().category(), expected, "{c:?}");
        }
    }

    #[test]
    fn errors_name_the_offender() {
        let err = validate(&call("stock_price", json!({"company": "A", "foo": 1})), &catalog()).unwrap_err();
        assert!(err.to_string().contains("foo"));
    }

    #[test]
    fn execute_unknown_schema_is_error_response() {
        let c = validate(&call("weather_now", json!({"city": "Oslo"})), &catalog()).unwrap();
        let r = execute(&c, &[], 100, None);
        assert_eq!(r.status, ApiStatus::Error);
    }
}
