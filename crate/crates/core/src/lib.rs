//! Self-sovereign authentication on a local permissioned ledger.
//!
//! The crate is organised around the roles of a credential ecosystem:
//!
//! - [`registry`]: the hash-chained, role-gated transaction log that anchors
//!   DIDs, schemas and claim definitions.
//! - [`identity`]: Ed25519 keys, DIDs, DID documents and authcrypt envelopes.
//! - [`credentials`]: salted-commitment credentials with selective disclosure.
//! - [`agent`]: edge agents that connect pairwise, exchange credentials and
//!   queue proof requests for holder consent.
//! - [`oidc`]: an OpenID Connect provider whose ID-token claims come from
//!   verified presentations, plus a relying-party validator.
//! - [`pki`]: domain bindings and certificate credentials verified against the
//!   ledger, and the certificate capacity calculator.

pub mod agent;
pub mod clock;
pub mod codec;
pub mod credentials;
pub mod identity;
pub mod oidc;
pub mod pki;
pub mod registry;
pub mod server;

pub use clock::{Clock, FixedClock, SharedClock, SystemClock};
pub use identity::{Did, Identity, KeyPair, Signature, Verkey};
pub use registry::Registry;
