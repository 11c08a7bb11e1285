//! The guide's chapters, compiled as doc-tests so every listing stays runnable.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(pulses, "pulses.md");
chapter!(hamiltonian, "hamiltonian.md");
chapter!(geometry, "geometry.md");
chapter!(tripod, "tripod.md");
chapter!(dynamics, "dynamics.md");
chapter!(sweeps, "sweeps.md");
chapter!(cli, "cli.md");
