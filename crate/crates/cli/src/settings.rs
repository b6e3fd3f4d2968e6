//! Effective settings: command-line flags override the config file, which
//! overrides the built-in defaults.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::ArgMatches;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Flag,
    Config,
    Default,
}

impl Origin {
    fn label(self) -> &'static str {
        match self {
            Origin::Flag => "flag",
            Origin::Config => "config",
            Origin::Default => "default",
        }
    }
}

pub struct Settings<'a> {
    matches: &'a ArgMatches,
    file: toml::Table,
    echo: Vec<(String, String, Origin)>,
}

fn toml_to_string(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Array(items) => items.iter().map(toml_to_string).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn key_of(id: &str) -> String {
    id.replace('-', "_")
}

impl<'a> Settings<'a> {
    /// Loads the file named by `config_id` (if given) and checks that every
    /// key in it names an argument of this subcommand.
    pub fn new(matches: &'a ArgMatches, command: &clap::Command, config_id: &str) -> Result<Self, CliError> {
        let file = match matches.get_one::<String>(config_id) {
            None => toml::Table::new(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage {
                    flag: format!("--{config_id}"),
                    message: format!("cannot read {path}: {e}"),
                })?;
                text.parse::<toml::Table>().map_err(|e| CliError::Usage {
                    flag: format!("--{config_id}"),
                    message: format!("{path} is not valid TOML: {e}"),
                })?
            }
        };
        let known: Vec<String> = command.get_arguments().map(|a| key_of(a.get_id().as_str())).collect();
        if let Some(bad) = file.keys().find(|k| !known.contains(k) || k.as_str() == key_of(config_id)) {
            return Err(CliError::Usage {
                flag: format!("--{config_id}"),
                message: format!("unknown setting `{bad}`"),
            });
        }
        Ok(Self {
            matches,
            file,
            echo: Vec::new(),
        })
    }

    fn raw(&self, id: &str) -> Option<(String, Origin)> {
        let from_flag = matches!(
            self.matches.value_source(id),
            Some(ValueSource::CommandLine) | Some(ValueSource::EnvVariable)
        );
        let flag_value = || {
            self.matches
                .get_raw(id)
                .map(|vals| vals.map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>().join(","))
        };
        if from_flag {
            return flag_value().map(|v| (v, Origin::Flag));
        }
        if let Some(v) = self.file.get(&key_of(id)) {
            return Some((toml_to_string(v), Origin::Config));
        }
        flag_value().map(|v| (v, Origin::Default))
    }

    fn usage(&self, id: &str, origin: Origin, message: String) -> CliError {
        let flag = match origin {
            Origin::Config => format!("{} (config file)", key_of(id)),
            _ => format!("--{id}"),
        };
        CliError::Usage { flag, message }
    }

    /// Typed value of an optional setting.
    pub fn opt<T>(&mut self, id: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some((raw, origin)) = self.raw(id) else {
            return Ok(None);
        };
        let value = raw
            .parse::<T>()
            .map_err(|e| self.usage(id, origin, format!("invalid value `{raw}`: {e}")))?;
        self.echo.push((key_of(id), raw, origin));
        Ok(Some(value))
    }

    /// Typed value of a setting with a default, or a required one.
    pub fn get<T>(&mut self, id: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.opt(id)?.ok_or_else(|| CliError::Usage {
            flag: format!("--{id}"),
            message: "is required".into(),
        })
    }

    /// Comma-separated list.
    pub fn list<T>(&mut self, id: &str) -> Result<Vec<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw: String = self.get(id)?;
        raw.split(',')
            .map(|part| {
                part.trim().parse::<T>().map_err(|e| CliError::Usage {
                    flag: format!("--{id}"),
                    message: format!("invalid list entry `{part}`: {e}"),
                })
            })
            .collect()
    }

    pub fn flag(&mut self, id: &str) -> Result<bool, CliError> {
        self.get(id)
    }

    /// Rejects a value with a usage error naming the flag.
    pub fn reject(&self, id: &str, message: impl Into<String>) -> CliError {
        let origin = self.raw(id).map_or(Origin::Default, |r| r.1);
        self.usage(id, origin, message.into())
    }

    /// `key = value  # origin` lines in the order the settings were read.
    pub fn echo(&self) -> String {
        self.echo
            .iter()
            .map(|(k, v, o)| format!("{k} = {v}  # {}\n", o.label()))
            .collect()
    }

    pub fn write_echo(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("config.echo");
        std::fs::write(&path, self.echo()).map_err(|e| CliError::Io { path, source: e })
    }
}
