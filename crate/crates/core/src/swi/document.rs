//! Line-oriented descriptor document.
//!
//! ```text
//! name: flux-text-to-image
//! template: templates/flux_t2i.json
//! kind: text-to-image
//! description: Free text, continued on indented
//!   following lines until the next field.
//! param: prompt prompt-text required
//! param: negative prompt-text optional lowres, blurry
//! constraint: resolution EmptyLatentImage.width 256..2048
//! constraint: sampler KSampler.sampler_name euler|dpmpp_2m
//! ---
//! name: ...
//! ```

use serde_json::Value;

use super::{ConstraintSpec, LibraryError, ParamKind, ParamSpec, SwiDescriptor, TaskKind, ValueDomain};

#[derive(Default)]
struct Draft {
    name: Option<String>,
    template: Option<String>,
    kind: Option<TaskKind>,
    description: Vec<String>,
    params: Vec<ParamSpec>,
    constraints: Vec<ConstraintSpec>,
    start_line: usize,
    in_description: bool,
}

impl Draft {
    fn is_blank(&self) -> bool {
        self.name.is_none()
            && self.template.is_none()
            && self.kind.is_none()
            && self.description.is_empty()
            && self.params.is_empty()
            && self.constraints.is_empty()
    }

    fn finish(self) -> Result<SwiDescriptor, LibraryError> {
        let line = self.start_line;
        let name = self.name.ok_or_else(|| LibraryError::Syntax {
            line,
            detail: "entry has no name".into(),
        })?;
        let missing = |field: &str| LibraryError::InvalidDescriptor {
            descriptor: name.clone(),
            detail: format!("missing {field}"),
        };
        let template = self.template.clone().ok_or_else(|| missing("template"))?;
        let task_kind = self.kind.ok_or_else(|| missing("kind"))?;
        let description = self.description.join(" ");
        if description.trim().is_empty() {
            return Err(missing("description"));
        }
        Ok(SwiDescriptor {
            name,
            description,
            task_kind,
            params: self.params,
            constraints: self.constraints,
            template: Some(template),
        })
    }
}

/// Parses every entry of a descriptor document, without touching templates.
pub fn parse_descriptor_document(text: &str) -> Result<Vec<SwiDescriptor>, LibraryError> {
    let mut out = Vec::new();
    let mut draft = Draft {
        start_line: 1,
        ..Draft::default()
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let syntax = |detail: String| LibraryError::Syntax { line: line_no, detail };
        if raw.trim() == "---" {
            if !draft.is_blank() {
                out.push(std::mem::take(&mut draft).finish()?);
            }
            draft.start_line = line_no + 1;
            continue;
        }
        let field = raw
            .split_once(':')
            .filter(|(f, _)| !raw.starts_with(char::is_whitespace) && FIELDS.contains(f));
        let Some((field, rest)) = field else {
            if draft.in_description && !raw.trim().is_empty() {
                draft.description.push(raw.trim().to_string());
                continue;
            }
            if raw.trim().is_empty() {
                continue;
            }
            return Err(syntax(format!("unexpected line {raw:?}")));
        };
        let rest = rest.trim();
        draft.in_description = field == "description";
        match field {
            "name" => draft.name = Some(rest.to_string()),
            "template" => draft.template = Some(rest.to_string()),
            "kind" => draft.kind = Some(rest.parse().map_err(syntax)?),
            "description" => {
                if !rest.is_empty() {
                    draft.description.push(rest.to_string());
                }
            }
            "param" => draft.params.push(parse_param(rest).map_err(syntax)?),
            "constraint" => draft.constraints.push(parse_constraint(rest).map_err(syntax)?),
            _ => unreachable!("field list is fixed"),
        }
    }
    if !draft.is_blank() {
        out.push(draft.finish()?);
    }
    Ok(out)
}

const FIELDS: [&str; 6] = ["name", "template", "kind", "description", "param", "constraint"];

fn parse_param(rest: &str) -> Result<ParamSpec, String> {
    let mut parts = rest.splitn(4, char::is_whitespace).filter(|s| !s.is_empty());
    let (Some(key), Some(kind), Some(req)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("param needs `<key> <kind> required|optional`, got {rest:?}"));
    };
    let kind: ParamKind = kind.parse()?;
    let required = match req {
        "required" => true,
        "optional" => false,
        other => return Err(format!("expected required|optional, got {other:?}")),
    };
    let default = parts.next().map(str::trim).filter(|s| !s.is_empty()).map(|s| match kind {
        ParamKind::Number => serde_json::from_str::<Value>(s).unwrap_or_else(|_| Value::String(s.into())),
        _ => Value::String(s.to_string()),
    });
    if required && default.is_some() {
        return Err(format!("required param {key} cannot have a default"));
    }
    Ok(ParamSpec {
        key: key.to_string(),
        kind,
        required,
        default,
    })
}

fn parse_constraint(rest: &str) -> Result<ConstraintSpec, String> {
    let usage = || format!("constraint needs `<key> <class_type>.<input> <domain>`, got {rest:?}");
    let (key, tail) = rest.split_once(char::is_whitespace).ok_or_else(usage)?;
    let (target, domain) = tail.trim().rsplit_once(char::is_whitespace).ok_or_else(usage)?;
    let (class, input) = target.trim().rsplit_once('.').ok_or_else(usage)?;
    if class.is_empty() || input.is_empty() {
        return Err(usage());
    }
    let domain = if let Some((lo, hi)) = domain.split_once("..") {
        let lo: f64 = lo.parse().map_err(|_| format!("bad range bound {lo:?}"))?;
        let hi: f64 = hi.parse().map_err(|_| format!("bad range bound {hi:?}"))?;
        ValueDomain::Range { lo, hi }
    } else {
        ValueDomain::OneOf(domain.split('|').map(str::to_string).collect())
    };
    Ok(ConstraintSpec {
        key: key.to_string(),
        target_class: class.to_string(),
        target_input: input.to_string(),
        domain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_continuations() {
        let doc = "name: a\ntemplate: a.json\nkind: text-to-image\ndescription: first\n  second line\nparam: prompt prompt-text required\nparam: seed number optional 42\nconstraint: res Empty Latent.width 256..2048\n---\nname: b\ntemplate: b.json\nkind: auxiliary\ndescription: x\nconstraint: s KSampler.sampler_name euler|dpmpp_2m\n";
        let ds = parse_descriptor_document(doc).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].description, "first second line");
        assert_eq!(ds[0].params[1].default, Some(Value::from(42)));
        assert_eq!(ds[0].constraints[0].target_class, "Empty Latent");
        assert_eq!(ds[0].constraints[0].domain, ValueDomain::Range { lo: 256.0, hi: 2048.0 });
        assert_eq!(
            ds[1].constraints[0].domain,
            ValueDomain::OneOf(vec!["euler".into(), "dpmpp_2m".into()])
        );
    }

    #[test]
    fn rejects_bad_lines() {
        let err = parse_descriptor_document("name: a\nbogus line\n").unwrap_err();
        assert!(matches!(err, LibraryError::Syntax { line: 2, .. }));
        let err = parse_descriptor_document("name: a\nkind: text-to-audio\n").unwrap_err();
        assert!(matches!(err, LibraryError::Syntax { line: 2, .. }));
        let err = parse_descriptor_document("name: a\nparam: p prompt-text maybe\n").unwrap_err();
        assert!(matches!(err, LibraryError::Syntax { .. }));
    }

    #[test]
    fn missing_fields_name_the_descriptor() {
        let err = parse_descriptor_document("name: lonely\nkind: auxiliary\ndescription: d\n").unwrap_err();
        assert_eq!(
            err,
            LibraryError::InvalidDescriptor {
                descriptor: "lonely".into(),
                detail: "missing template".into()
            }
        );
    }
}
