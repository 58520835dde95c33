//! English and Spanish display labels for chart payloads.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Label {
    pub en: String,
    pub es: String,
}

impl Label {
    fn new(en: &str, es: &str) -> Label {
        Label { en: en.into(), es: es.into() }
    }
}

/// Label for a parameter, factor, level, activity or class key. Unknown
/// keys are echoed in both languages.
pub fn label(key: &str) -> Label {
    let (en, es) = match key {
        "avg_saccade_rate" => ("Average saccade rate (per min)", "Tasa media de sacadas (por min)"),
        "avg_fixation_rate" => ("Average fixation rate (per min)", "Tasa media de fijaciones (por min)"),
        "avg_saccade_time" => ("Average saccade duration (ms)", "Duración media de sacadas (ms)"),
        "avg_fixation_time" => ("Average fixation duration (ms)", "Duración media de fijaciones (ms)"),
        "sex" => ("Sex", "Sexo"),
        "group" => ("Group", "Grupo"),
        "html_level" => ("HTML level", "Nivel de HTML"),
        "F" => ("Female", "Mujer"),
        "M" => ("Male", "Hombre"),
        "U" => ("Unspecified", "No especificado"),
        "G1" => ("Group 1", "Grupo 1"),
        "G2" => ("Group 2", "Grupo 2"),
        "G3" => ("Group 3", "Grupo 3"),
        "basic" => ("Basic", "Básico"),
        "intermediate" => ("Intermediate", "Intermedio"),
        "advanced" => ("Advanced", "Avanzado"),
        "video" => ("Video", "Vídeo"),
        "reading" => ("Reading", "Lectura"),
        "assignment" => ("Assignment", "Tarea"),
        "session" => ("Whole session", "Sesión completa"),
        "all" => ("All activities", "Todas las actividades"),
        "video_watching" => ("Video watching", "Visualización de vídeo"),
        "boxplot" => ("Box plot", "Diagrama de caja"),
        "heatmap" => ("Attention heatmap", "Mapa de calor de atención"),
        "anova" => ("One-way ANOVA", "ANOVA de un factor"),
        "prediction" => ("Predicted activity", "Actividad predicha"),
        "report" => ("Evaluation report", "Informe de evaluación"),
        other => return Label::new(other, other),
    };
    Label::new(en, es)
}
