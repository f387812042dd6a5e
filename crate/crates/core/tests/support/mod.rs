pub mod decode_oracle;
pub mod edit_oracle;
pub mod kn_oracle;
