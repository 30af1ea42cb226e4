use crate::data::Domain;
use crate::diff::sigmoid;
use crate::scalar::Scalar;

/// Relevance of an instance to the opposite domain, from its domain logit:
/// `sigmoid(z)` for source instances, `1 - sigmoid(z)` for target ones.
pub fn relevance<S: Scalar>(logit: S, domain: Domain) -> S {
    match domain {
        Domain::Source => sigmoid(logit),
        Domain::Target => S::one() - sigmoid(logit),
    }
}

/// `+1` when removing an instance whose relevance is strictly below `tau`, else `-1`.
pub fn reward<S: Scalar>(relevance: S, tau: S) -> S {
    if relevance < tau {
        S::one()
    } else {
        -S::one()
    }
}
