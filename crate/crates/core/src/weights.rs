//! Named parameter bundles generic over their payload: `Tensor` for stored
//! weights and gradients, `Var` for weights bound to a tape.

macro_rules! named_weights {
    (
        $(#[$meta:meta])*
        pub struct $name:ident { $($field:ident),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T> {
            $(pub $field: T,)+
        }

        impl<T> $name<T> {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),+];

            pub fn fields(&self) -> Vec<(&'static str, &T)> {
                vec![$((stringify!($field), &self.$field)),+]
            }

            pub fn fields_mut(&mut self) -> Vec<(&'static str, &mut T)> {
                vec![$((stringify!($field), &mut self.$field)),+]
            }

            pub fn map<U>(&self, mut f: impl FnMut(&'static str, &T) -> U) -> $name<U> {
                $name { $($field: f(stringify!($field), &self.$field),)+ }
            }

            pub fn try_map<U, E>(
                &self,
                mut f: impl FnMut(&'static str, &T) -> Result<U, E>,
            ) -> Result<$name<U>, E> {
                Ok($name { $($field: f(stringify!($field), &self.$field)?,)+ })
            }
        }
    };
}

pub(crate) use named_weights;
